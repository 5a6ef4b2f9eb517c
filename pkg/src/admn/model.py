"""Embedding-level-fusion multimodal network and its training stages.

Per-modality ViT-style backbones feed projected tokens plus a learned
readout token into a fusion transformer; a 2-layer MLP head reads the
fused readout token. Stage 0 pretrains each backbone as a masked
autoencoder under LayerDrop; Stage 1 finetunes the joint network with
LayerDrop, full-backbone dropout, and modality dropout while early
backbone layers stay frozen.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .budget import layer_macs, linear_macs
from .errors import ConfigError, ContractError
from .layerdrop import DropConfig, LayerMask, sample_modality_dropout, \
    sample_training_mask
from .layers import TransformerLayerParams, add_positional, patch_embed, \
    transformer_layer_forward
from .optim import Adam
from .rng import RngState, derive_seed
from .tensor_io import load_checkpoint, save_checkpoint


@dataclass(frozen=True)
class ModalityConfig:
    name: str
    depth: int
    channels: int = 1
    height: int = 16
    width: int = 16
    patch: int = 4
    dim: int = 32
    heads: int = 4
    freeze_boundary: int = 2

    def __post_init__(self):
        if self.height % self.patch or self.width % self.patch:
            raise ConfigError(f"patch {self.patch} must divide {self.height}x{self.width}")
        if self.dim % self.heads:
            raise ConfigError(f"heads {self.heads} must divide dim {self.dim}")
        if not 0 <= self.freeze_boundary < self.depth:
            raise ConfigError(
                f"freeze boundary {self.freeze_boundary} must be < depth {self.depth}"
            )

    @property
    def tokens(self) -> int:
        return (self.height // self.patch) * (self.width // self.patch)

    @property
    def patch_dim(self) -> int:
        return self.channels * self.patch * self.patch


@dataclass(frozen=True)
class MultimodalNetConfig:
    modalities: tuple
    fusion_layers: int = 6
    fusion_dim: int = 256
    fusion_heads: int = 4
    head_kind: str = "regress"   # regress | classify
    out_dim: int = 2

    def __post_init__(self):
        if not self.modalities:
            raise ConfigError("need at least one modality")
        if self.fusion_dim % self.fusion_heads:
            raise ConfigError(
                f"fusion heads {self.fusion_heads} must divide dim {self.fusion_dim}"
            )
        if self.head_kind not in ("regress", "classify"):
            raise ConfigError(f"unknown head kind {self.head_kind!r}")

    @property
    def depths(self):
        return [m.depth for m in self.modalities]

    @property
    def total_layers(self) -> int:
        return sum(self.depths)


def toy_config(head_kind: str = "regress", out_dim: int = 2,
               n_modalities: int = 2, depth: int = 4) -> MultimodalNetConfig:
    """Desk-scale default: 16x16 inputs, patch 4, dim 32, fusion dim 32."""
    names = ["image", "depth", "radar"][:n_modalities]
    mods = tuple(
        ModalityConfig(name=name, depth=depth, freeze_boundary=depth // 2)
        for name in names
    )
    return MultimodalNetConfig(
        modalities=mods, fusion_layers=2, fusion_dim=32, fusion_heads=4,
        head_kind=head_kind, out_dim=out_dim,
    )


class MultimodalNet:
    """Parameter container plus forward passes. Params live in a flat
    name->Tensor dict with a deterministic order."""

    def __init__(self, config: MultimodalNetConfig, rng: RngState):
        self.config = config
        self.patch_projs = []
        self.backbones = []
        self.fusion_projs = []
        for mod in config.modalities:
            self.patch_projs.append(
                ad.glorot_uniform(rng, (mod.patch_dim, mod.dim), mod.patch_dim, mod.dim)
            )
            self.backbones.append([
                TransformerLayerParams.init(rng, mod.dim, mod.heads)
                for _ in range(mod.depth)
            ])
            self.fusion_projs.append(
                ad.glorot_uniform(rng, (mod.dim, config.fusion_dim),
                                  mod.dim, config.fusion_dim)
            )
        self.readout = ad.glorot_uniform(
            rng, (1, config.fusion_dim), config.fusion_dim, config.fusion_dim
        )
        self.fusion = [
            TransformerLayerParams.init(rng, config.fusion_dim, config.fusion_heads)
            for _ in range(config.fusion_layers)
        ]
        d = config.fusion_dim
        self.head_w1 = ad.glorot_uniform(rng, (d, d), d, d)
        self.head_b1 = ad.zeros((d,), requires_grad=True)
        self.head_w2 = ad.glorot_uniform(rng, (d, config.out_dim), d, config.out_dim)
        self.head_b2 = ad.zeros((config.out_dim,), requires_grad=True)

    def named_params(self) -> dict[str, Tensor]:
        out = {}
        for m, mod in enumerate(self.config.modalities):
            out[f"mod{m}.patch_proj"] = self.patch_projs[m]
            for i, layer in enumerate(self.backbones[m]):
                out.update(layer.named(f"mod{m}.layer{i}"))
            out[f"mod{m}.fusion_proj"] = self.fusion_projs[m]
        out["readout"] = self.readout
        for i, layer in enumerate(self.fusion):
            out.update(layer.named(f"fusion.layer{i}"))
        out["head.w1"] = self.head_w1
        out["head.b1"] = self.head_b1
        out["head.w2"] = self.head_w2
        out["head.b2"] = self.head_b2
        return out

    def frozen_names(self) -> set[str]:
        """Stage 1 freeze set: patch embedding plus layers below the boundary."""
        frozen = set()
        for m, mod in enumerate(self.config.modalities):
            frozen.add(f"mod{m}.patch_proj")
            for i in range(mod.freeze_boundary):
                for name, _ in self.backbones[m][i].named(f"mod{m}.layer{i}"):
                    frozen.add(name)
        return frozen

    # -- forward -----------------------------------------------------------
    def backbone_forward(self, m_index: int, x: Tensor, activity) -> Tensor:
        """Patch-embed then apply each layer per its activity flag/gate."""
        mod = self.config.modalities[m_index]
        if len(activity) != mod.depth:
            raise ContractError(
                f"activity length {len(activity)} != depth {mod.depth}"
            )
        tokens = add_positional(patch_embed(x, mod.patch, self.patch_projs[m_index]))
        for layer, act in zip(self.backbones[m_index], activity):
            tokens = transformer_layer_forward(tokens, layer, act)
        return tokens

    def fuse_and_predict(self, embeddings, modality_gates=None) -> Tensor:
        """Project modality tokens into fusion space, fuse, apply the head."""
        if not embeddings:
            raise ContractError("need at least one modality embedding")
        batch = embeddings[0].shape[0]
        projected = []
        for m, emb in enumerate(embeddings):
            tok = emb @ self.fusion_projs[m]
            if modality_gates is not None:
                tok = tok * modality_gates[m]
            projected.append(tok)
        readout = self.readout.reshape(1, 1, self.config.fusion_dim) \
            * ad.ones((batch, 1, 1))
        tokens = ad.concat([readout] + projected, axis=1)
        for layer in self.fusion:
            tokens = transformer_layer_forward(tokens, layer, True)
        pooled = tokens[:, 0, :]
        hidden = ad.gelu(pooled @ self.head_w1 + self.head_b1)
        return hidden @ self.head_w2 + self.head_b2

    def forward(self, inputs, activities, modality_gates=None) -> Tensor:
        embeddings = [
            self.backbone_forward(m, x, activities[m])
            for m, x in enumerate(inputs)
        ]
        return self.fuse_and_predict(embeddings, modality_gates)

    def task_loss(self, pred: Tensor, labels) -> Tensor:
        if self.config.head_kind == "regress":
            return ad.mse(pred, Tensor(labels))
        return ad.cross_entropy(pred, labels)


def mask_activities(mask: LayerMask):
    return [list(m) for m in mask.per_modality]


def param_hash(params: dict[str, Tensor]) -> str:
    digest = hashlib.sha256()
    for name in sorted(params):
        digest.update(name.encode())
        digest.update(np.ascontiguousarray(params[name].data).tobytes())
    return digest.hexdigest()


def plan_model_macs(config: MultimodalNetConfig, mask: LayerMask) -> int:
    """Analytic per-sample MACs of one forward pass under ``mask``."""
    total = 0
    fusion_tokens = 1
    for m, mod in enumerate(config.modalities):
        t = mod.tokens
        fusion_tokens += t
        total += linear_macs(t, mod.patch_dim, mod.dim)
        total += sum(layer_macs(t, mod.dim) for active in mask.per_modality[m] if active)
        total += linear_macs(t, mod.dim, config.fusion_dim)
    total += config.fusion_layers * layer_macs(fusion_tokens, config.fusion_dim)
    total += linear_macs(1, config.fusion_dim, config.fusion_dim)
    total += linear_macs(1, config.fusion_dim, config.out_dim)
    return total


# -- metrics ----------------------------------------------------------------


def regression_error(pred: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-sample Euclidean error in label units."""
    return np.sqrt(((pred - labels) ** 2).sum(axis=-1))


def batch_metric(head_kind: str, pred: np.ndarray, labels) -> np.ndarray:
    if head_kind == "regress":
        return regression_error(pred, np.asarray(labels))
    return (pred.argmax(axis=-1) == np.asarray(labels)).astype(np.float64)


@dataclass
class EvalReport:
    metric: float                      # mean error (regress) or accuracy
    per_sample: list = field(default_factory=list)
    executed_macs: int = 0
    predicted_macs: int = 0

    def mean_plan_macs(self) -> float:
        return self.predicted_macs / max(1, len(self.per_sample))


def evaluate(net: MultimodalNet, split, provider) -> EvalReport:
    """Run the network under per-sample masks from ``provider``.

    provider(index, sample) -> LayerMask. Samples sharing a mask are
    batched together. Dropped layers are skipped outright, so executed
    MACs equal the analytic per-plan counts.
    """
    n = len(split)
    if n == 0:
        raise ContractError("cannot evaluate an empty split")
    masks = []
    groups: dict[str, list[int]] = {}
    for i in range(n):
        mask = provider(i, split.sample(i))
        masks.append(mask)
        groups.setdefault(mask.to_string(), []).append(i)

    per_sample_metric = np.empty(n)
    start_macs = ad.MACS.count
    predicted = 0
    for mask_string, idx in groups.items():
        mask = LayerMask.from_string(mask_string)
        activities = mask_activities(mask)
        inputs = [Tensor(mod_arr[idx]) for mod_arr in split.inputs]
        pred = net.forward(inputs, activities)
        per_sample_metric[idx] = batch_metric(
            net.config.head_kind, pred.data, split.labels[idx]
        )
        predicted += len(idx) * plan_model_macs(net.config, mask)
    executed = ad.MACS.count - start_macs

    report = EvalReport(
        metric=float(per_sample_metric.mean()),
        executed_macs=executed,
        predicted_macs=predicted,
    )
    for i in range(n):
        report.per_sample.append({
            "sample_id": int(split.sample_ids[i]),
            "mask": masks[i].to_string(),
            "metric": float(per_sample_metric[i]),
            "corruption": [float(v) for v in split.corruption_values[i]],
        })
    return report


# -- stage 0: masked-autoencoder pretraining ---------------------------------


class MaePretrainer:
    """One backbone plus a fixed-depth decoder for masked reconstruction."""

    DECODER_DEPTH = 2

    def __init__(self, mod: ModalityConfig, rng: RngState,
                 drop: DropConfig | None = None, mask_ratio: float = 0.75):
        if not 0.0 < mask_ratio < 1.0:
            raise ConfigError(f"mask_ratio must lie in (0,1), got {mask_ratio}")
        self.mod = mod
        self.mask_ratio = mask_ratio
        # Stage 0 uses plain LayerDrop only: full-backbone dropout is a
        # multimodal regularizer and stays off here.
        self.drop = drop or DropConfig(full_backbone_rate=0.0, modality_dropout=0.0)
        self.patch_proj = ad.glorot_uniform(
            rng, (mod.patch_dim, mod.dim), mod.patch_dim, mod.dim
        )
        self.encoder = [
            TransformerLayerParams.init(rng, mod.dim, mod.heads)
            for _ in range(mod.depth)
        ]
        self.mask_token = ad.glorot_uniform(rng, (1, mod.dim), mod.dim, mod.dim)
        self.decoder = [
            TransformerLayerParams.init(rng, mod.dim, mod.heads)
            for _ in range(self.DECODER_DEPTH)
        ]
        self.out_proj = ad.glorot_uniform(
            rng, (mod.dim, mod.patch_dim), mod.dim, mod.patch_dim
        )

    def named_params(self) -> dict[str, Tensor]:
        out = {"patch_proj": self.patch_proj}
        for i, layer in enumerate(self.encoder):
            out.update(layer.named(f"layer{i}"))
        out["mask_token"] = self.mask_token
        for i, layer in enumerate(self.decoder):
            out.update(layer.named(f"decoder{i}"))
        out["out_proj"] = self.out_proj
        return out

    def encoder_param_arrays(self) -> dict[str, np.ndarray]:
        """Weights to transplant into a MultimodalNet backbone."""
        out = {"patch_proj": self.patch_proj.data.copy()}
        for i, layer in enumerate(self.encoder):
            for name, tensor in layer.named(f"layer{i}"):
                out[name] = tensor.data.copy()
        return out

    def _patch_targets(self, x: Tensor) -> Tensor:
        mod = self.mod
        gh, gw = mod.height // mod.patch, mod.width // mod.patch
        t = x.reshape(-1, mod.channels, gh, mod.patch, gw, mod.patch)
        t = t.transpose(0, 2, 4, 1, 3, 5)
        return t.reshape(-1, mod.tokens, mod.patch_dim)

    def reconstruction_loss(self, rng: RngState, x: Tensor,
                            encoder_activity=None) -> Tensor:
        """Masked-token reconstruction loss for a batch (B, c, H, W)."""
        mod = self.mod
        t = mod.tokens
        n_mask = min(max(1, int(round(self.mask_ratio * t))), t - 1)
        perm = rng.permutation(t)
        masked_idx, visible_idx = perm[:n_mask], perm[n_mask:]

        if encoder_activity is None:
            encoder_activity = [
                bool(u >= self.drop.layer_rate) for u in rng.uniform((mod.depth,))
            ]
        tokens = add_positional(patch_embed(x, mod.patch, self.patch_proj))
        visible = ad.index_select(tokens, 1, visible_idx)
        for layer, act in zip(self.encoder, encoder_activity):
            visible = transformer_layer_forward(visible, layer, act)

        batch = x.shape[0]
        fill = self.mask_token.reshape(1, 1, mod.dim) * ad.ones((batch, n_mask, 1))
        stacked = ad.concat([visible, fill], axis=1)
        order = np.concatenate([visible_idx, masked_idx])
        inverse = np.argsort(order)
        full = ad.index_select(stacked, 1, inverse)
        full = add_positional(full)
        for layer in self.decoder:
            full = transformer_layer_forward(full, layer, True)
        recon = full @ self.out_proj

        targets = ad.stop_gradient(self._patch_targets(x))
        return ad.mse(
            ad.index_select(recon, 1, masked_idx),
            ad.index_select(targets, 1, masked_idx),
        )


def mae_pretrain_step(rng: RngState, trainer: MaePretrainer, optimizer: Adam,
                      batch: Tensor) -> float:
    loss = trainer.reconstruction_loss(rng, batch)
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return loss.item()


def train_mae(mod: ModalityConfig, images: np.ndarray, steps: int, lr: float,
              seed: int, batch_size: int = 32, layer_rate: float = 0.2,
              mask_ratio: float = 0.75) -> tuple[MaePretrainer, list[float]]:
    """Seeded Stage 0 loop over an image array (n, c, H, W)."""
    init_rng = RngState(derive_seed(seed, 10))
    trainer = MaePretrainer(
        mod, init_rng,
        drop=DropConfig(layer_rate=layer_rate, full_backbone_rate=0.0,
                        modality_dropout=0.0),
        mask_ratio=mask_ratio,
    )
    optimizer = Adam(trainer.named_params(), lr=lr)
    loop_rng = RngState(derive_seed(seed, 11))
    n = images.shape[0]
    losses = []
    for step in range(steps):
        idx = loop_rng.integers(n, (min(batch_size, n),))
        batch = Tensor(images[idx])
        losses.append(mae_pretrain_step(loop_rng, trainer, optimizer, batch))
    return trainer, losses


# -- stage 1: layerdrop finetuning --------------------------------------------


def stage1_finetune_step(rng: RngState, net: MultimodalNet, optimizer: Adam,
                         inputs, labels, cfg: DropConfig) -> float:
    """One finetuning step: fresh LayerDrop + modality-dropout draws."""
    mask = sample_training_mask(rng, net.config.depths, cfg)
    keep = sample_modality_dropout(rng, len(net.config.modalities),
                                   cfg.modality_dropout)
    gates = [1.0 if k else 0.0 for k in keep]
    pred = net.forward(inputs, mask_activities(mask), modality_gates=gates)
    loss = net.task_loss(pred, labels)
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return loss.item()


@dataclass
class TrainResult:
    net: MultimodalNet
    train_losses: list
    val_metrics: list


def _loop_state_arrays(net_params, optimizer, rng, epoch) -> dict:
    out = {f"param.{k}": v.data for k, v in net_params.items()}
    out.update(optimizer.state_arrays())
    out["_loop.epoch"] = np.array([float(epoch)])
    out["_loop.rng_seed"] = np.array(
        [float(rng.seed >> 32), float(rng.seed & 0xFFFFFFFF)]
    )
    out["_loop.rng_position"] = np.array([float(rng.position)])
    return out


def _restore_loop_state(arrays, net_params, optimizer) -> tuple[RngState, int]:
    for k, tensor in net_params.items():
        tensor.data = arrays[f"param.{k}"].copy()
    optimizer.load_state_arrays(arrays)
    seed = (int(arrays["_loop.rng_seed"][0]) << 32) | int(arrays["_loop.rng_seed"][1])
    rng = RngState(seed, int(arrays["_loop.rng_position"][0]))
    return rng, int(arrays["_loop.epoch"][0])


def train_stage1(net: MultimodalNet, dataset, epochs: int, lr: float,
                 cfg: DropConfig, seed: int, batch_size: int = 32,
                 lr_schedule: str = "none", resume_arrays: dict | None = None,
                 checkpoint_dir=None, checkpoint_every: int = 0) -> TrainResult:
    """Seeded Stage 1 loop; optimizer skips the frozen early layers.

    With ``resume_arrays`` (a saved loop state) training continues exactly
    where it stopped; the final state matches an uninterrupted run.
    """
    params = net.named_params()
    optimizer = Adam(params, lr=lr, frozen=net.frozen_names())
    if resume_arrays is not None:
        rng, start_epoch = _restore_loop_state(resume_arrays, params, optimizer)
    else:
        rng, start_epoch = RngState(derive_seed(seed, 20)), 0

    train = dataset.splits["train"]
    val = dataset.splits["val"]
    n = len(train)
    train_losses, val_metrics = [], []
    for epoch in range(start_epoch, epochs):
        if lr_schedule == "linear":
            from .optim import linear_decay_lr
            optimizer.lr = linear_decay_lr(lr, epoch, epochs)
        order = rng.permutation(n)
        epoch_losses = []
        for lo in range(0, n, batch_size):
            idx = order[lo:lo + batch_size]
            inputs = [Tensor(mod_arr[idx]) for mod_arr in train.inputs]
            epoch_losses.append(
                stage1_finetune_step(rng, net, optimizer, inputs,
                                     train.labels[idx], cfg)
            )
        train_losses.append(float(np.mean(epoch_losses)))
        val_metrics.append(
            evaluate(net, val, full_mask_provider(net.config)).metric
        )
        if checkpoint_dir is not None and checkpoint_every \
                and (epoch + 1) % checkpoint_every == 0:
            save_checkpoint(checkpoint_dir,
                            _loop_state_arrays(params, optimizer, rng, epoch + 1))
    return TrainResult(net=net, train_losses=train_losses, val_metrics=val_metrics)


def full_mask_provider(config: MultimodalNetConfig):
    mask = LayerMask.full(config.depths)
    return lambda i, sample: mask


def load_backbone_weights(net: MultimodalNet, m_index: int,
                          arrays: dict[str, np.ndarray]) -> None:
    """Copy Stage 0 encoder weights into backbone ``m_index``."""
    params = net.named_params()
    for name, value in arrays.items():
        target = params.get(f"mod{m_index}.{name}")
        if target is None:
            continue
        if target.data.shape != value.shape:
            raise ContractError(
                f"shape mismatch for {name}: {target.data.shape} vs {value.shape}"
            )
        target.data = value.copy()


def save_net(net: MultimodalNet, directory) -> None:
    params = net.named_params()
    roles = {name: "parameter" for name in params}
    save_checkpoint(directory, params, roles)


def load_net(config: MultimodalNetConfig, directory) -> MultimodalNet:
    net = MultimodalNet(config, RngState(0))
    params = net.named_params()
    arrays = load_checkpoint(directory)
    missing = set(params) - set(arrays)
    if missing:
        raise ContractError(f"checkpoint missing tensors: {sorted(missing)[:3]}...")
    for name, tensor in params.items():
        if tensor.data.shape != arrays[name].shape:
            raise ContractError(f"shape mismatch for {name}")
        tensor.data = arrays[name].copy()
    return net
