"""Flat key-value run configuration (INI sections, no schema language).

A commented example lives in ``example.cfg`` at the repository root and in
the README. Missing or malformed fields raise ConfigError naming the
field.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .budget import BudgetSpec
from .controller import ControllerConfig
from .data import SEVERITY_ORDER, CorruptionSpec
from .errors import ConfigError
from .layerdrop import DropConfig
from .model import ModalityConfig, MultimodalNetConfig

PROVIDER_CHOICES = ("admn", "admn_ae", "task_only", "plain_st", "naive",
                    "unimodal0", "unimodal1", "upper_bound")

MODE_BY_PROVIDER = {
    "admn": "corruption_supervised",
    "admn_ae": "autoencoder",
    "task_only": "task_only",
    "plain_st": "plain_st",
}

PROVIDER_LABELS = {
    "admn": "ADMN",
    "admn_ae": "ADMN_AE",
    "task_only": "Task-Only",
    "plain_st": "Plain-ST",
    "naive": "Naive",
    "unimodal0": "Unimodal-A",
    "unimodal1": "Unimodal-B",
    "upper_bound": "Upper Bound",
}


def _get(parser, section, key, cast=str, default=None, required=False):
    try:
        raw = parser.get(section, key)
    except (configparser.NoSectionError, configparser.NoOptionError):
        if required:
            raise ConfigError(f"missing config field [{section}] {key}")
        return default
    try:
        return cast(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for [{section}] {key}: {raw!r} ({exc})")


def _int_list(raw: str):
    return [int(v.strip()) for v in raw.split(",") if v.strip()]


def _float_list(raw: str):
    return [float(v.strip()) for v in raw.split(",") if v.strip()]


def _str_list(raw: str):
    return [v.strip() for v in raw.split(",") if v.strip()]


@dataclass
class RunConfig:
    """Everything one experiment needs, parsed from a single file."""

    task: str
    corruption: CorruptionSpec
    data_n: int
    data_seed: int
    split_ratios: tuple
    model: MultimodalNetConfig
    drop: DropConfig
    budgets: list
    costs: tuple
    controller_mode: str
    controller: ControllerConfig
    seeds: list
    out_dir: Path
    pretrain_steps: int = 300
    pretrain_lr: float = 1e-3
    mask_ratio: float = 0.75
    finetune_epochs: int = 200
    finetune_lr: float = 5e-4
    finetune_batch: int = 32
    finetune_schedule: str = "none"
    finetune_resume: str = ""
    finetune_checkpoint_every: int = 0
    use_pretrained: bool = True
    controller_epochs: int = 10
    controller_lr: float = 1e-3
    controller_batch: int = 32
    ae_steps: int = 300
    ae_lr: float = 1e-3
    providers: list = field(default_factory=lambda: list(PROVIDER_CHOICES))

    # -- derived paths -------------------------------------------------------
    @property
    def data_dir(self) -> Path:
        return self.out_dir / "data"

    def stage0_dir(self, modality: str, seed: int) -> Path:
        return self.out_dir / f"stage0_{modality}_seed{seed}"

    def stage1_dir(self, seed: int) -> Path:
        return self.out_dir / f"stage1_seed{seed}"

    def controller_dir(self, mode: str, budget: int, seed: int) -> Path:
        return self.out_dir / f"controller_{mode}_b{budget}_seed{seed}"

    @property
    def eval_dir(self) -> Path:
        return self.out_dir / "eval"

    def budget_spec(self, budget: int) -> BudgetSpec:
        return BudgetSpec(budget=budget, costs=self.costs)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
        parser.read(path)

        task = _get(parser, "task", "kind", str, required=True)
        if task not in ("regress", "classify"):
            raise ConfigError(f"[task] kind must be regress|classify, got {task!r}")

        mode = _get(parser, "data", "mode", str, required=True)
        modality_names = _get(parser, "model", "modalities", _str_list,
                              default=["image", "depth"])
        value_sets = []
        for name in modality_names:
            raw = _get(parser, "data", f"values_{name}", str, required=True)
            if mode == "gaussian":
                value_sets.append(tuple(_float_list(raw)))
            else:
                values = tuple(_str_list(raw))
                bad = [v for v in values if v not in SEVERITY_ORDER]
                if bad:
                    raise ConfigError(f"bad severities {bad} in values_{name}")
                value_sets.append(values)
        corruption = CorruptionSpec(mode, tuple(value_sets))

        depth = _get(parser, "model", "depth", int, default=4)
        n_classes = _get(parser, "task", "classes", int, default=8)
        out_dim = 2 if task == "regress" else n_classes
        modalities = tuple(
            ModalityConfig(
                name=name,
                depth=depth,
                channels=_get(parser, "model", "channels", int, default=1),
                height=_get(parser, "model", "height", int, default=16),
                width=_get(parser, "model", "width", int, default=16),
                patch=_get(parser, "model", "patch", int, default=4),
                dim=_get(parser, "model", "dim", int, default=32),
                heads=_get(parser, "model", "heads", int, default=4),
                freeze_boundary=_get(parser, "model", "freeze_boundary", int,
                                     default=depth // 2),
            )
            for name in modality_names
        )
        model = MultimodalNetConfig(
            modalities=modalities,
            fusion_layers=_get(parser, "model", "fusion_layers", int, default=2),
            fusion_dim=_get(parser, "model", "fusion_dim", int, default=32),
            fusion_heads=_get(parser, "model", "fusion_heads", int, default=4),
            head_kind=task,
            out_dim=out_dim,
        )

        drop = DropConfig(
            layer_rate=_get(parser, "drop", "layer_rate", float, default=0.2),
            full_backbone_rate=_get(parser, "drop", "full_backbone_rate", float,
                                    default=0.1),
            modality_dropout=_get(parser, "drop", "modality_dropout", float,
                                  default=0.1),
        )

        budgets = _get(parser, "budget", "budgets", _int_list, required=True)
        costs = tuple(_get(parser, "budget", "costs", _int_list,
                           default=[1] * len(modality_names)))
        if len(costs) != len(modality_names):
            raise ConfigError("[budget] costs must list one cost per modality")

        controller_mode = _get(parser, "controller", "mode", str,
                               default="corruption_supervised")
        supervision = "quantitative"
        n_categories = 0
        if _get(parser, "controller", "supervision", str, default="") == "categorical":
            supervision = "categorical"
            n_categories = 1
            for vs in value_sets:
                n_categories *= len(vs)
        controller = ControllerConfig(
            downsample=_get(parser, "controller", "downsample", int, default=4),
            embed_dim=_get(parser, "controller", "embed_dim", int, default=16),
            mlp_hidden=_get(parser, "controller", "hidden", int, default=32),
            supervision=supervision,
            n_categories=n_categories,
        )

        seeds = _get(parser, "eval", "seeds", _int_list, default=[100, 200, 300])
        providers = _get(parser, "eval", "providers", _str_list,
                         default=list(PROVIDER_CHOICES))
        bad = [p for p in providers if p not in PROVIDER_CHOICES]
        if bad:
            raise ConfigError(f"unknown providers {bad}; choose from {PROVIDER_CHOICES}")

        out_dir = Path(_get(parser, "paths", "out", str, required=True))

        return cls(
            task=task,
            corruption=corruption,
            data_n=_get(parser, "data", "n", int, default=480),
            data_seed=_get(parser, "data", "seed", int, default=100),
            split_ratios=tuple(_get(parser, "data", "ratios", _float_list,
                                    default=[0.6, 0.1, 0.3])),
            model=model,
            drop=drop,
            budgets=budgets,
            costs=costs,
            controller_mode=controller_mode,
            controller=controller,
            seeds=seeds,
            out_dir=out_dir,
            pretrain_steps=_get(parser, "pretrain", "steps", int, default=300),
            pretrain_lr=_get(parser, "pretrain", "lr", float, default=1e-3),
            mask_ratio=_get(parser, "pretrain", "mask_ratio", float, default=0.75),
            finetune_epochs=_get(parser, "finetune", "epochs", int, default=200),
            finetune_lr=_get(parser, "finetune", "lr", float, default=5e-4),
            finetune_batch=_get(parser, "finetune", "batch_size", int, default=32),
            finetune_schedule=_get(parser, "finetune", "schedule", str,
                                   default="none"),
            finetune_resume=_get(parser, "finetune", "resume", str, default=""),
            finetune_checkpoint_every=_get(parser, "finetune", "checkpoint_every",
                                           int, default=0),
            use_pretrained=_get(parser, "finetune", "use_pretrained",
                                lambda v: v.lower() in ("1", "true", "yes"),
                                default=True),
            controller_epochs=_get(parser, "controller", "epochs", int,
                                   default=10 if task == "regress" else 15),
            controller_lr=_get(parser, "controller", "lr", float, default=1e-3),
            controller_batch=_get(parser, "controller", "batch_size", int,
                                  default=32),
            ae_steps=_get(parser, "controller", "ae_steps", int, default=300),
            ae_lr=_get(parser, "controller", "ae_lr", float, default=1e-3),
            providers=providers,
        )
