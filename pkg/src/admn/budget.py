"""Cost model and compute accounting.

MACs (multiply-accumulates) are the unit throughout, counted analytically
from shapes. Only matrix products count (attention/MLP projections,
attention score and value products, convolutions-as-matmul); elementwise
ops, normalizations, and nonlinearities contribute exactly zero. The same
rule drives the engine's instrumented counter, so predicted and executed
counts must agree exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

from .errors import BudgetError, ContractError, RangeError
from .layerdrop import LayerMask

MLP_WIDTH_FACTOR = 4


@dataclass(frozen=True)
class BudgetSpec:
    """Strict layer budget in cost units plus the per-modality cost model."""

    budget: int
    costs: tuple  # integer cost of one layer, per modality in config order
    pin_first_layers: bool = True

    def __post_init__(self):
        if any(int(c) != c or c < 1 for c in self.costs):
            raise RangeError(f"per-layer costs must be integers >= 1, got {self.costs}")
        if self.pin_first_layers and self.budget < sum(self.costs):
            raise BudgetError(
                f"budget {self.budget} < pinned cost {sum(self.costs)}"
            )

    @property
    def pinned_cost(self) -> int:
        return sum(self.costs) if self.pin_first_layers else 0


def layer_macs(tokens: int, dim: int) -> int:
    """One transformer encoder layer.

    q/k/v/o projections 4*t*d^2, attention scores+values 2*t^2*d, MLP
    (width factor 4) 8*t*d^2. Norms, softmax, GELU, residuals: 0 MACs.
    """
    return 4 * tokens * dim * dim + 2 * tokens * tokens * dim \
        + MLP_WIDTH_FACTOR * 2 * tokens * dim * dim


def linear_macs(rows: int, in_dim: int, out_dim: int) -> int:
    return rows * in_dim * out_dim


def conv_macs(out_h: int, out_w: int, kernel: int, in_channels: int,
              out_channels: int) -> int:
    return out_h * out_w * kernel * kernel * in_channels * out_channels


def plan_cost(mask: LayerMask, spec: BudgetSpec) -> int:
    """Cost-weighted count of active layers."""
    if len(mask.per_modality) != len(spec.costs):
        raise ContractError(
            f"mask has {len(mask.per_modality)} modalities, spec {len(spec.costs)}"
        )
    return sum(
        cost * sum(layers)
        for cost, layers in zip(spec.costs, mask.per_modality)
    )


@dataclass(frozen=True)
class BudgetViolation:
    kind: str      # "excess" | "shortfall" | "pin"
    detail: str
    amount: int = 0


def enforce_budget(mask: LayerMask, spec: BudgetSpec) -> BudgetViolation | None:
    """None when the plan spends exactly the budget and respects pins."""
    if spec.pin_first_layers:
        for i, layers in enumerate(mask.per_modality):
            if not layers[0]:
                return BudgetViolation("pin", f"modality {i} first layer inactive")
    cost = plan_cost(mask, spec)
    if cost > spec.budget:
        return BudgetViolation("excess", f"plan cost {cost} > budget {spec.budget}",
                               cost - spec.budget)
    if cost < spec.budget:
        return BudgetViolation("shortfall", f"plan cost {cost} < budget {spec.budget}",
                               spec.budget - cost)
    return None


@dataclass
class FlopsReport:
    """Mean per-sample MAC breakdown for one (budget, provider) cell."""

    backbone_macs: float
    fusion_macs: float
    head_macs: float
    controller_macs: float
    samples: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def model_macs(self) -> float:
        return self.backbone_macs + self.fusion_macs + self.head_macs

    @property
    def total_macs(self) -> float:
        return self.model_macs + self.controller_macs

    @property
    def controller_share(self) -> float:
        return self.controller_macs / self.total_macs if self.total_macs else 0.0


REPORT_HEADER = ["budget", "provider", "mean_flops", "controller_flops",
                 "controller_share", "mean_metric"]


def write_flops_csv(path, rows) -> None:
    """rows: iterable of (budget, provider, FlopsReport, mean_metric)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_HEADER)
        for budget, provider, report, metric in rows:
            writer.writerow([
                budget, provider,
                repr(report.total_macs),
                repr(report.controller_macs),
                repr(report.controller_share),
                repr(float(metric)),
            ])
