"""Layer activation policies.

Training-time: stochastic LayerDrop with independent full-backbone dropout
and modality dropout. Test-time: deterministic evenly-spaced keep sets and
the equal-share naive allocation baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import BudgetError, ContractError, RangeError
from .rng import RngState


@dataclass(frozen=True)
class DropConfig:
    """Stochastic drop rates used during training."""

    layer_rate: float = 0.2        # per-layer drop probability
    full_backbone_rate: float = 0.1  # chance a whole backbone goes dark
    modality_dropout: float = 0.1    # chance a fused modality embedding is zeroed

    def __post_init__(self):
        for name in ("layer_rate", "full_backbone_rate", "modality_dropout"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise RangeError(f"{name} must lie in [0, 1), got {value}")


@dataclass
class LayerMask:
    """Per-modality boolean activation vectors, in model config order."""

    per_modality: list[list[bool]]

    def __post_init__(self):
        self.per_modality = [[bool(b) for b in m] for m in self.per_modality]

    def active_count(self) -> int:
        return sum(sum(m) for m in self.per_modality)

    def flat(self) -> list[bool]:
        return [b for m in self.per_modality for b in m]

    def to_string(self) -> str:
        return "|".join("".join("1" if b else "0" for b in m) for m in self.per_modality)

    @classmethod
    def from_string(cls, text: str) -> "LayerMask":
        return cls([[ch == "1" for ch in part] for part in text.split("|")])

    @classmethod
    def full(cls, depths) -> "LayerMask":
        return cls([[True] * d for d in depths])

    @classmethod
    def empty(cls, depths) -> "LayerMask":
        return cls([[False] * d for d in depths])


def sample_training_mask(rng: RngState, depths, cfg: DropConfig) -> LayerMask:
    """Draw one LayerDrop mask.

    Per modality: one uniform decides full-backbone drop (rate q), then one
    uniform per layer decides individual drops (rate p). All depth+1 draws
    are consumed even when the backbone drops, so the stream position after
    each modality is independent of the outcomes.
    """
    if not depths:
        raise ContractError("depths must be nonempty")
    masks = []
    for depth in depths:
        nuke = rng.uniform() < cfg.full_backbone_rate
        layer_draws = rng.uniform((depth,))
        if nuke:
            masks.append([False] * depth)
        else:
            masks.append([bool(u >= cfg.layer_rate) for u in layer_draws])
    return LayerMask(masks)


def sample_modality_dropout(rng: RngState, n_modalities: int, rate: float) -> list[bool]:
    """Per-modality keep flags; False means the fused embedding is zeroed."""
    return [bool(u >= rate) for u in rng.uniform((n_modalities,))]


def every_other_keep_set(depth: int, keep: int) -> list[int]:
    """Deterministic evenly spaced keep set over ``depth`` layers.

    keep=1 yields {0}; otherwise indices round(j*(depth-1)/(keep-1)) with
    half-up rounding, collisions advancing to the next free index upward.
    Layer 0 is always kept, and layer depth-1 whenever keep >= 2.
    """
    if keep < 1 or keep > depth:
        raise BudgetError(f"cannot keep {keep} of {depth} layers")
    if keep == 1:
        return [0]
    chosen: list[int] = []
    taken = set()
    spacing = (depth - 1) / (keep - 1)
    for j in range(keep):
        idx = int(j * spacing + 0.5)
        while idx in taken:
            idx += 1
        taken.add(idx)
        chosen.append(idx)
    return sorted(chosen)


def naive_allocation(budget: int, depths, costs=None) -> LayerMask:
    """Equal split of the budget across modalities, every-other within each.

    Each modality receives the same number of real layers k, with
    k * sum(costs) <= budget; any remainder is spent one layer at a time on
    modalities in config order. The budget must be exactly exhausted
    (capped at the full-network cost), else BudgetError.
    """
    m = len(depths)
    if costs is None:
        costs = [1] * m
    if len(costs) != m:
        raise ContractError("costs must match depths")
    if budget < sum(costs):
        raise BudgetError(
            f"budget {budget} cannot cover one pinned layer per modality "
            f"(cost {sum(costs)})"
        )
    full_cost = sum(d * c for d, c in zip(depths, costs))
    target = min(budget, full_cost)
    round_cost = sum(costs)
    share = min(target // round_cost, min(depths))
    keep = [share] * m
    remainder = target - share * round_cost
    progressed = True
    while remainder > 0 and progressed:
        progressed = False
        for i in range(m):
            if keep[i] < depths[i] and costs[i] <= remainder:
                keep[i] += 1
                remainder -= costs[i]
                progressed = True
                if remainder == 0:
                    break
    if remainder != 0:
        raise BudgetError(
            f"budget {budget} leaves a residue of {remainder} cost units "
            "that no modality's per-layer cost divides"
        )
    masks = []
    for depth, k in zip(depths, keep):
        active = [False] * depth
        for idx in every_other_keep_set(depth, k):
            active[idx] = True
        masks.append(active)
    return LayerMask(masks)
