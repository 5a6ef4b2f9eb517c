"""Budget allocator: perceives input quality, selects layers differentiably.

A lightweight perceptual stack (strided downsampling into per-modality
convolutions, fused by a small transformer) produces a quality embedding.
An allocation MLP maps it to one logit per backbone layer; relaxed
probabilities come from Gumbel-Softmax at temperature 1, discretized to an
exact cost-weighted budget by greedy top selection with first layers
pinned, and trained through the discretization with a straight-through
estimator. Supervision is either a corruption-prediction loss alongside
the task loss, or an autoencoder-initialized encoder that stays frozen
while the allocation MLP trains on the task loss alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .budget import BudgetSpec, conv_macs, layer_macs, linear_macs
from .errors import BudgetError, ConfigError, ContractError
from .layerdrop import LayerMask, every_other_keep_set, naive_allocation
from .layers import ConvLayerParams, TransformerLayerParams, conv2d_forward, \
    transformer_layer_forward
from .model import MultimodalNet, MultimodalNetConfig, param_hash
from .rng import RngState, derive_seed

ALLOCATE_MODES = ("gumbel_st", "plain_st", "deterministic_topL")


@dataclass(frozen=True)
class ControllerConfig:
    downsample: int = 4
    conv_channels: tuple = (4, 8)
    embed_dim: int = 16
    fusion_heads: int = 2
    fusion_layers: int = 1
    mlp_hidden: int = 32
    supervision: str = "quantitative"   # quantitative | categorical | none
    n_categories: int = 0

    def __post_init__(self):
        if self.supervision not in ("quantitative", "categorical", "none"):
            raise ConfigError(f"unknown supervision {self.supervision!r}")
        if self.supervision == "categorical" and self.n_categories < 2:
            raise ConfigError("categorical supervision needs n_categories >= 2")
        if self.embed_dim % self.fusion_heads:
            raise ConfigError("fusion heads must divide embed dim")


class ControllerNet:
    """Perceptual stack, allocation head, optional corruption head/decoder."""

    def __init__(self, model_config: MultimodalNetConfig,
                 cfg: ControllerConfig, rng: RngState):
        self.model_config = model_config
        self.cfg = cfg
        self.n_modalities = len(model_config.modalities)
        self.total_layers = model_config.total_layers

        c1, c2 = cfg.conv_channels
        self.convs = []
        self.token_projs = []
        self.modality_embeds = []
        self.decoders = []
        self.map_shapes = []
        self._conv_out_shapes = []
        for mod in model_config.modalities:
            dh = mod.height // cfg.downsample
            dw = mod.width // cfg.downsample
            if dh < 3 or dw < 3:
                raise ConfigError(
                    f"downsample {cfg.downsample} leaves {dh}x{dw} < conv kernel"
                )
            self.map_shapes.append((mod.channels, dh, dw))
            conv_a = ConvLayerParams.init(rng, 3, mod.channels, c1, stride=2)
            conv_b = ConvLayerParams.init(rng, 1, c1, c2, stride=2)
            oh = (dh - 3) // 2 + 1
            ow = (dw - 3) // 2 + 1
            oh2 = (oh - 1) // 2 + 1
            ow2 = (ow - 1) // 2 + 1
            self._conv_out_shapes.append(((oh, ow), (oh2, ow2)))
            feat = c2 * oh2 * ow2
            self.convs.append((conv_a, conv_b))
            self.token_projs.append(
                ad.glorot_uniform(rng, (feat, cfg.embed_dim), feat, cfg.embed_dim)
            )
            # learned token bias marks which modality a token came from;
            # the fusion transformer is otherwise permutation-blind
            self.modality_embeds.append(
                ad.glorot_uniform(rng, (cfg.embed_dim,), cfg.embed_dim,
                                  cfg.embed_dim)
            )
            ds_pixels = mod.channels * dh * dw
            self.decoders.append({
                "w1": ad.glorot_uniform(rng, (cfg.embed_dim, cfg.mlp_hidden),
                                        cfg.embed_dim, cfg.mlp_hidden),
                "b1": ad.zeros((cfg.mlp_hidden,), requires_grad=True),
                "w2": ad.glorot_uniform(rng, (cfg.mlp_hidden, ds_pixels),
                                        cfg.mlp_hidden, ds_pixels),
                "b2": ad.zeros((ds_pixels,), requires_grad=True),
            })

        self.fusion = [
            TransformerLayerParams.init(rng, cfg.embed_dim, cfg.fusion_heads)
            for _ in range(cfg.fusion_layers)
        ]
        h = cfg.mlp_hidden
        self.pi_w1 = ad.glorot_uniform(rng, (cfg.embed_dim, h), cfg.embed_dim, h)
        self.pi_b1 = ad.zeros((h,), requires_grad=True)
        self.pi_w2 = ad.glorot_uniform(rng, (h, self.total_layers), h, self.total_layers)
        self.pi_b2 = ad.zeros((self.total_layers,), requires_grad=True)
        if cfg.supervision == "quantitative":
            corr_out = self.n_modalities
        elif cfg.supervision == "categorical":
            corr_out = cfg.n_categories
        else:
            corr_out = 0
        if corr_out:
            self.corr_w1 = ad.glorot_uniform(rng, (cfg.embed_dim, h), cfg.embed_dim, h)
            self.corr_b1 = ad.zeros((h,), requires_grad=True)
            self.corr_w2 = ad.glorot_uniform(rng, (h, corr_out), h, corr_out)
            self.corr_b2 = ad.zeros((corr_out,), requires_grad=True)
        else:
            self.corr_w1 = self.corr_b1 = self.corr_w2 = self.corr_b2 = None

    # -- parameter bookkeeping ---------------------------------------------
    def encoder_params(self) -> dict[str, Tensor]:
        out = {}
        for m in range(self.n_modalities):
            conv_a, conv_b = self.convs[m]
            out.update(conv_a.named(f"mod{m}.conv_a"))
            out.update(conv_b.named(f"mod{m}.conv_b"))
            out[f"mod{m}.token_proj"] = self.token_projs[m]
            out[f"mod{m}.embed"] = self.modality_embeds[m]
        for i, layer in enumerate(self.fusion):
            out.update(layer.named(f"fusion.layer{i}"))
        return out

    def allocation_params(self) -> dict[str, Tensor]:
        return {"pi.w1": self.pi_w1, "pi.b1": self.pi_b1,
                "pi.w2": self.pi_w2, "pi.b2": self.pi_b2}

    def corruption_params(self) -> dict[str, Tensor]:
        if self.corr_w1 is None:
            return {}
        return {"corr.w1": self.corr_w1, "corr.b1": self.corr_b1,
                "corr.w2": self.corr_w2, "corr.b2": self.corr_b2}

    def decoder_params(self) -> dict[str, Tensor]:
        out = {}
        for m, dec in enumerate(self.decoders):
            for key, tensor in dec.items():
                out[f"mod{m}.decoder.{key}"] = tensor
        return out

    def named_params(self) -> dict[str, Tensor]:
        out = self.encoder_params()
        out.update(self.allocation_params())
        out.update(self.corruption_params())
        out.update(self.decoder_params())
        return out

    # -- forward -------------------------------------------------------------
    def downsample(self, x: Tensor) -> Tensor:
        f = self.cfg.downsample
        return x[:, :, ::f, ::f]

    def perceive(self, inputs) -> Tensor:
        """Fused quality embedding for a batch; one row per sample."""
        if len(inputs) != self.n_modalities:
            raise ContractError(
                f"need {self.n_modalities} modality inputs, got {len(inputs)}"
            )
        tokens = []
        for m, x in enumerate(inputs):
            small = self.downsample(x)
            conv_a, conv_b = self.convs[m]
            h = ad.gelu(conv2d_forward(small, conv_a))
            h = ad.gelu(conv2d_forward(h, conv_b))
            batch = h.shape[0]
            flat = h.reshape(batch, int(np.prod(h.shape[1:])))
            tok = flat @ self.token_projs[m] + self.modality_embeds[m]
            tokens.append(tok.reshape(batch, 1, self.cfg.embed_dim))
        fused = ad.concat(tokens, axis=1)
        for layer in self.fusion:
            fused = transformer_layer_forward(fused, layer, True)
        return fused.mean(axis=1)

    def layer_logits(self, embedding: Tensor) -> Tensor:
        hidden = ad.gelu(embedding @ self.pi_w1 + self.pi_b1)
        return hidden @ self.pi_w2 + self.pi_b2

    def predict_corruption(self, embedding: Tensor) -> Tensor:
        if self.corr_w1 is None:
            raise ConfigError("controller has no corruption head")
        hidden = ad.gelu(embedding @ self.corr_w1 + self.corr_b1)
        return hidden @ self.corr_w2 + self.corr_b2

    def reconstruct(self, embedding: Tensor) -> list[Tensor]:
        """Per-modality reconstruction of the downsampled inputs."""
        outs = []
        for dec in self.decoders:
            hidden = ad.gelu(embedding @ dec["w1"] + dec["b1"])
            outs.append(hidden @ dec["w2"] + dec["b2"])
        return outs


# -- allocation ----------------------------------------------------------------


def pinned_indices(config: MultimodalNetConfig) -> list[int]:
    """Flat index of each modality's first layer."""
    pins, offset = [], 0
    for depth in config.depths:
        pins.append(offset)
        offset += depth
    return pins


def flat_costs(config: MultimodalNetConfig, spec: BudgetSpec) -> np.ndarray:
    if len(spec.costs) != len(config.modalities):
        raise ContractError("cost model modality count mismatch")
    return np.concatenate([
        np.full(depth, cost, dtype=np.int64)
        for depth, cost in zip(config.depths, spec.costs)
    ])


def _achievable_sums(avail_counts, costs) -> set:
    sums = {0}
    for count, cost in zip(avail_counts, costs):
        sums = {s + j * cost for s in sums for j in range(count + 1)}
    return sums


def _select_row(y: np.ndarray, config: MultimodalNetConfig, spec: BudgetSpec,
                pins: list[int], costs_flat: np.ndarray) -> np.ndarray:
    """Exact-budget greedy top selection on one relaxed probability row."""
    c_total = y.shape[0]
    z = np.zeros(c_total)
    remaining = spec.budget
    modality_of = np.concatenate([
        np.full(depth, m, dtype=np.int64) for m, depth in enumerate(config.depths)
    ])
    avail = [depth - (1 if spec.pin_first_layers else 0) for depth in config.depths]
    if spec.pin_first_layers:
        for pin in pins:
            z[pin] = 1.0
            remaining -= int(costs_flat[pin])
    if remaining < 0:
        raise BudgetError(f"budget {spec.budget} below pinned cost")
    full_cost = int(costs_flat.sum())
    if spec.budget > full_cost:
        raise BudgetError(f"budget {spec.budget} exceeds full network cost {full_cost}")

    # stable order: descending value per unit cost, lowest index on ties
    order = sorted(
        (i for i in range(c_total) if z[i] == 0.0),
        key=lambda i: (-y[i] / costs_flat[i], i),
    )
    for i in order:
        if remaining == 0:
            break
        cost = int(costs_flat[i])
        if cost > remaining:
            continue
        m = modality_of[i]
        avail_after = list(avail)
        avail_after[m] -= 1
        if (remaining - cost) not in _achievable_sums(avail_after, spec.costs):
            continue
        z[i] = 1.0
        avail[m] -= 1
        remaining -= cost
    if remaining != 0:
        raise BudgetError(
            f"budget {spec.budget} leaves an unreachable residue of {remaining}"
        )
    return z


@dataclass
class AllocationPlan:
    """Relaxed probabilities, hard selection, and straight-through gates."""

    relaxed: Tensor          # (batch, C) probabilities
    hard: np.ndarray         # (batch, C) 0/1 selection, cost-weighted sum = budget
    gates: Tensor            # (batch, C): forward=hard, backward=identity to relaxed
    spec: BudgetSpec
    pinned: list

    @property
    def batch(self) -> int:
        return self.hard.shape[0]

    def mask_for(self, row: int, depths) -> LayerMask:
        parts, offset = [], 0
        for depth in depths:
            parts.append([bool(v) for v in self.hard[row, offset:offset + depth]])
            offset += depth
        return LayerMask(parts)

    def gate_activities(self, depths):
        """Per-modality, per-layer scalar gates shaped (batch, 1, 1)."""
        activities, offset = [], 0
        batch = self.batch
        for depth in depths:
            layer_gates = []
            for i in range(depth):
                layer_gates.append(
                    self.gates[:, offset + i].reshape(batch, 1, 1)
                )
            activities.append(layer_gates)
            offset += depth
        return activities


def allocate(embedding: Tensor, ctrl: ControllerNet, spec: BudgetSpec,
             rng: RngState | None, mode: str = "gumbel_st") -> AllocationPlan:
    """Turn a quality embedding into an exact-budget layer selection.

    gumbel_st: Gumbel-Softmax (temperature 1) relaxation, hard top
    selection, straight-through gates. plain_st: same without noise.
    deterministic_topL: inference-only, no noise, gates carry no gradient.
    """
    if mode not in ALLOCATE_MODES:
        raise ConfigError(f"unknown allocate mode {mode!r}")
    config = ctrl.model_config
    single = embedding.ndim == 1
    if single:
        embedding = embedding.reshape(1, embedding.shape[0])
    logits = ctrl.layer_logits(embedding)
    if mode == "gumbel_st":
        if rng is None:
            raise ContractError("gumbel_st needs an rng")
        noise = ad.sample_gumbel(rng, logits.shape)
        relaxed = ad.softmax(ad.log_softmax(logits) + noise, axis=-1)
    else:
        relaxed = ad.softmax(logits, axis=-1)

    pins = pinned_indices(config)
    costs_flat = flat_costs(config, spec)
    hard = np.stack([
        _select_row(relaxed.data[b], config, spec, pins, costs_flat)
        for b in range(relaxed.shape[0])
    ])
    if mode == "deterministic_topL":
        gates = Tensor(hard)
    else:
        gates = ad.straight_through(hard, relaxed)
    return AllocationPlan(relaxed=relaxed, hard=hard, gates=gates,
                          spec=spec, pinned=pins)


# -- losses and training steps -------------------------------------------------


def corruption_loss(ctrl: ControllerNet, embedding: Tensor, target,
                    squared: bool = False) -> Tensor:
    """Corruption supervision against the head's prediction.

    Quantitative mode: sum of absolute errors over modalities (optionally
    squared errors), averaged over the batch. Categorical mode:
    cross-entropy against the category label.
    """
    pred = ctrl.predict_corruption(embedding)
    if ctrl.cfg.supervision == "quantitative":
        target = np.asarray(target, dtype=np.float64)
        if target.ndim == 1:
            target = target[None, :]
        if target.shape[1] != ctrl.n_modalities:
            raise ConfigError(
                f"quantitative targets need {ctrl.n_modalities} columns"
            )
        batch = target.shape[0]
        if squared:
            diff = pred - Tensor(target)
            return ad.tsum(diff * diff) * (1.0 / batch)
        return ad.l1(pred, Tensor(target)) * (1.0 / batch)
    if ctrl.cfg.supervision == "categorical":
        return ad.cross_entropy(pred, target)
    raise ConfigError("controller was built without a corruption head")


def run_frozen_net(net: MultimodalNet, inputs, plan: AllocationPlan) -> Tensor:
    """Forward the stage-1 net under straight-through gates."""
    return net.forward(inputs, plan.gate_activities(net.config.depths))


def freeze_net(net: MultimodalNet) -> str:
    """Mark every stage-1 parameter grad-free; returns the parameter hash."""
    for tensor in net.named_params().values():
        tensor.requires_grad = False
    return param_hash(net.named_params())


def controller_train_step(rng: RngState, ctrl: ControllerNet, net: MultimodalNet,
                          optimizer, inputs, labels, corr_target,
                          spec: BudgetSpec, sample_mode: str = "gumbel_st",
                          include_task: bool = True, include_corr: bool = False,
                          squared_corr: bool = False) -> dict:
    """One optimizer step on the controller against the frozen net."""
    embedding = ctrl.perceive(inputs)
    losses = {}
    total = None
    if include_task:
        plan = allocate(embedding, ctrl, spec, rng, mode=sample_mode)
        pred = run_frozen_net(net, inputs, plan)
        task = net.task_loss(pred, labels)
        losses["task"] = task.item()
        total = task
    if include_corr:
        corr = corruption_loss(ctrl, embedding, corr_target, squared=squared_corr)
        losses["corruption"] = corr.item()
        total = corr if total is None else total + corr
    if total is None:
        raise ContractError("controller step needs at least one loss term")
    optimizer.zero_grad()
    total.backward()
    optimizer.step()
    losses["total"] = total.item()
    return losses


def ae_pretrain_step(rng: RngState, ctrl: ControllerNet, optimizer,
                     inputs) -> float:
    """One reconstruction step of the controller autoencoder."""
    embedding = ctrl.perceive(inputs)
    recons = ctrl.reconstruct(embedding)
    targets, preds = [], []
    for m, x in enumerate(inputs):
        small = ctrl.downsample(x)
        batch = small.shape[0]
        targets.append(ad.stop_gradient(
            small.reshape(batch, int(np.prod(small.shape[1:])))
        ))
        preds.append(recons[m])
    loss = ad.mse(ad.concat(preds, axis=1), ad.concat(targets, axis=1))
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return loss.item()


CONTROLLER_MODES = ("corruption_supervised", "autoencoder", "task_only", "plain_st")


def freeze_encoder(ctrl: ControllerNet) -> None:
    for tensor in ctrl.encoder_params().values():
        tensor.requires_grad = False


def ae_pretrain(ctrl: ControllerNet, split, steps: int, lr: float, seed: int,
                batch_size: int = 32) -> list:
    """Autoencoder pretraining of the perceptual stack on one split."""
    from .optim import Adam
    params = {}
    params.update(ctrl.encoder_params())
    params.update(ctrl.decoder_params())
    optimizer = Adam(params, lr=lr)
    rng = RngState(seed)
    n = len(split)
    losses = []
    for _ in range(steps):
        idx = rng.integers(n, (min(batch_size, n),))
        inputs = [Tensor(arr[idx]) for arr in split.inputs]
        losses.append(ae_pretrain_step(rng, ctrl, optimizer, inputs))
    return losses


@dataclass
class ControllerTrainResult:
    ctrl: "ControllerNet"
    epoch_losses: list          # per epoch: dict of mean loss components
    ae_losses: list             # reconstruction curve when mode=autoencoder


def train_controller(ctrl: ControllerNet, net: MultimodalNet, dataset,
                     spec: BudgetSpec, mode: str, epochs: int, lr: float,
                     seed: int, batch_size: int = 32,
                     ae_steps: int = 300, ae_lr: float = 1e-3,
                     squared_corr: bool = False) -> ControllerTrainResult:
    """Stage 2: train one controller for one budget against a frozen net.

    corruption_supervised trains on the corruption loss alone for the
    first epoch, then on task + corruption. plain_st is its no-noise
    ablation. task_only drops the corruption term. autoencoder pretrains
    the perceptual stack by reconstruction, freezes it, and fits only the
    allocation MLP on the task loss.
    """
    from .optim import Adam, linear_decay_lr
    if mode not in CONTROLLER_MODES:
        raise ConfigError(f"unknown controller mode {mode!r}")
    if mode in ("corruption_supervised", "plain_st") and ctrl.corr_w1 is None:
        raise ConfigError(f"mode {mode} needs a corruption head")

    frozen_hash = freeze_net(net)
    train = dataset.splits["train"]
    ae_losses = []
    if mode == "autoencoder":
        ae_losses = ae_pretrain(ctrl, train, ae_steps, ae_lr,
                                derive_seed(seed, 31), batch_size)
        freeze_encoder(ctrl)
        params = ctrl.allocation_params()
    elif mode == "task_only":
        params = {}
        params.update(ctrl.encoder_params())
        params.update(ctrl.allocation_params())
    else:
        params = {}
        params.update(ctrl.encoder_params())
        params.update(ctrl.allocation_params())
        params.update(ctrl.corruption_params())
    optimizer = Adam(params, lr=lr)
    sample_mode = "plain_st" if mode == "plain_st" else "gumbel_st"

    rng = RngState(derive_seed(seed, 32))
    n = len(train)
    quantitative = ctrl.cfg.supervision == "quantitative"
    epoch_losses = []
    for epoch in range(epochs):
        optimizer.lr = linear_decay_lr(lr, epoch, epochs)
        if mode in ("corruption_supervised", "plain_st"):
            include_corr = True
            include_task = epoch > 0   # first epoch: corruption loss only
        else:
            include_corr = False
            include_task = True
        order = rng.permutation(n)
        sums: dict = {}
        batches = 0
        for lo in range(0, n, batch_size):
            idx = order[lo:lo + batch_size]
            inputs = [Tensor(arr[idx]) for arr in train.inputs]
            corr_target = (train.corruption_values[idx] if quantitative
                           else train.corruption_category[idx])
            losses = controller_train_step(
                rng, ctrl, net, optimizer, inputs, train.labels[idx],
                corr_target, spec, sample_mode=sample_mode,
                include_task=include_task, include_corr=include_corr,
                squared_corr=squared_corr,
            )
            for key, value in losses.items():
                sums[key] = sums.get(key, 0.0) + value
            batches += 1
        epoch_losses.append({k: v / batches for k, v in sums.items()})
        if param_hash(net.named_params()) != frozen_hash:
            raise ContractError("stage-1 weights changed during controller training")
    return ControllerTrainResult(ctrl=ctrl, epoch_losses=epoch_losses,
                                 ae_losses=ae_losses)


# -- baseline providers ----------------------------------------------------------


def baseline_provider(kind: str, config: MultimodalNetConfig, budget: int,
                      costs=None, unimodal_index: int = 0,
                      keep_counts=None):
    """Per-sample-constant LayerMask providers for the evaluation baselines."""
    depths = config.depths
    if kind == "upper_bound":
        mask = LayerMask.full(depths)
    elif kind == "naive":
        mask = naive_allocation(budget, depths, costs)
    elif kind == "unimodal":
        cost = 1 if costs is None else costs[unimodal_index]
        if budget % cost:
            raise BudgetError(
                f"budget {budget} not a multiple of modality cost {cost}"
            )
        keep = budget // cost
        if keep > depths[unimodal_index]:
            raise BudgetError(
                f"budget {budget} exceeds modality depth {depths[unimodal_index]}"
            )
        parts = []
        for m, depth in enumerate(depths):
            active = [False] * depth
            if m == unimodal_index:
                for idx in every_other_keep_set(depth, keep):
                    active[idx] = True
            parts.append(active)
        mask = LayerMask(parts)
    elif kind == "every_other":
        if keep_counts is None or len(keep_counts) != len(depths):
            raise ContractError("every_other needs per-modality keep counts")
        parts = []
        for depth, keep in zip(depths, keep_counts):
            active = [False] * depth
            for idx in every_other_keep_set(depth, keep):
                active[idx] = True
            parts.append(active)
        mask = LayerMask(parts)
    else:
        raise ConfigError(f"unknown baseline kind {kind!r}")
    return lambda i, sample: mask


def controller_provider(ctrl: ControllerNet, spec: BudgetSpec):
    """Inference-mode provider: deterministic top selection per sample."""
    def provider(i, sample):
        inputs = [Tensor(arr[None, ...]) for arr in sample.inputs]
        embedding = ctrl.perceive(inputs)
        plan = allocate(embedding, ctrl, spec, None, mode="deterministic_topL")
        return plan.mask_for(0, ctrl.model_config.depths)
    return provider


# -- cost accounting ---------------------------------------------------------------


def controller_macs(ctrl: ControllerNet) -> int:
    """Analytic per-sample MACs of perceive + allocate."""
    cfg = ctrl.cfg
    total = 0
    for m in range(ctrl.n_modalities):
        (oh, ow), (oh2, ow2) = ctrl._conv_out_shapes[m]
        channels, _, _ = ctrl.map_shapes[m]
        c1, c2 = cfg.conv_channels
        total += conv_macs(oh, ow, 3, channels, c1)
        total += conv_macs(oh2, ow2, 1, c1, c2)
        total += linear_macs(1, c2 * oh2 * ow2, cfg.embed_dim)
    total += cfg.fusion_layers * layer_macs(ctrl.n_modalities, cfg.embed_dim)
    total += linear_macs(1, cfg.embed_dim, cfg.mlp_hidden)
    total += linear_macs(1, cfg.mlp_hidden, ctrl.total_layers)
    return total


# -- logging -----------------------------------------------------------------------


def write_plan_log(path, report, budget: int) -> None:
    """One line per sample: id, budget, mask, corruption, metric."""
    lines = []
    for entry in report.per_sample:
        corr = ",".join(repr(v) for v in entry["corruption"])
        lines.append(
            f"{entry['sample_id']}\t{budget}\t{entry['mask']}\t{corr}\t"
            f"{entry['metric']!r}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def dump_latents(path, ctrl: ControllerNet, split) -> None:
    """CSV of (sample id, embedding components, corruption label)."""
    import csv as _csv
    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        dim = ctrl.cfg.embed_dim
        writer.writerow(["sample_id"] + [f"e{i}" for i in range(dim)] + ["category"])
        for i in range(len(split)):
            sample = split.sample(i)
            inputs = [Tensor(arr[None, ...]) for arr in sample.inputs]
            emb = ctrl.perceive(inputs).data[0]
            writer.writerow([int(split.sample_ids[i])]
                            + [repr(float(v)) for v in emb]
                            + [sample.corruption_category])
