"""Stochastic and deterministic layer-activation policies."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from admn.errors import BudgetError, RangeError
from admn.layerdrop import DropConfig, LayerMask, every_other_keep_set, \
    naive_allocation, sample_modality_dropout, sample_training_mask
from admn.rng import RngState


class TestDropConfig:
    def test_defaults(self):
        cfg = DropConfig()
        assert (cfg.layer_rate, cfg.full_backbone_rate, cfg.modality_dropout) \
            == (0.2, 0.1, 0.1)

    @pytest.mark.parametrize("field", ["layer_rate", "full_backbone_rate",
                                       "modality_dropout"])
    def test_rates_must_be_probabilities(self, field):
        with pytest.raises(RangeError):
            DropConfig(**{field: 1.0})


class TestSampleTrainingMask:
    def test_no_drops(self):
        mask = sample_training_mask(RngState(1), [4, 4], DropConfig(
            layer_rate=0.0, full_backbone_rate=0.0))
        assert mask.active_count() == 8

    def test_certain_full_drop(self):
        mask = sample_training_mask(RngState(2), [4, 4], DropConfig(
            layer_rate=0.0, full_backbone_rate=0.999999))
        assert mask.active_count() == 0

    def test_reproducible(self):
        cfg = DropConfig()
        a = sample_training_mask(RngState(3), [6, 6], cfg)
        b = sample_training_mask(RngState(3), [6, 6], cfg)
        assert a.to_string() == b.to_string()

    def test_monte_carlo_drop_rates(self):
        # per-layer drop probability is q + (1-q) * p = 0.28
        cfg = DropConfig(layer_rate=0.2, full_backbone_rate=0.1)
        rng = RngState(4)
        n = 100_000
        depth = 12
        dropped = np.zeros(depth)
        full_drops = 0
        for _ in range(n):
            mask = sample_training_mask(rng, [depth], cfg)
            layer = np.array(mask.per_modality[0])
            dropped += ~layer
            full_drops += not layer.any()
        per_layer = dropped / n
        assert np.abs(per_layer - 0.28).max() < 0.005
        assert full_drops / n >= 0.1 - 0.005


class TestModalityDropout:
    def test_rate_zero_keeps_everything(self):
        assert sample_modality_dropout(RngState(5), 4, 0.0) == [True] * 4

    def test_monte_carlo_rate(self):
        rng = RngState(6)
        keeps = np.array([sample_modality_dropout(rng, 1, 0.1)[0]
                          for _ in range(50_000)])
        assert abs((~keeps).mean() - 0.1) < 0.01


class TestEveryOtherKeepSet:
    def test_keep_all(self):
        assert every_other_keep_set(12, 12) == list(range(12))

    def test_keep_one(self):
        assert every_other_keep_set(12, 1) == [0]

    def test_documented_rounding_case(self):
        assert every_other_keep_set(12, 6) == [0, 2, 4, 7, 9, 11]

    def test_keep_more_than_depth_rejected(self):
        with pytest.raises(BudgetError):
            every_other_keep_set(4, 5)

    @given(depth=st.integers(1, 24), data=st.data())
    @settings(max_examples=200, deadline=None)
    def test_size_and_endpoints(self, depth, data):
        keep = data.draw(st.integers(1, depth))
        chosen = every_other_keep_set(depth, keep)
        assert len(chosen) == keep
        assert len(set(chosen)) == keep
        assert all(0 <= i < depth for i in chosen)
        assert 0 in chosen
        if keep >= 2:
            assert depth - 1 in chosen


class TestNaiveAllocation:
    def test_equal_split(self):
        mask = naive_allocation(6, [12, 12])
        assert [sum(m) for m in mask.per_modality] == [3, 3]

    def test_unequal_costs_equal_real_layers(self):
        # 12 cost units with costs (3, 1): three layers each
        mask = naive_allocation(12, [12, 12], costs=[3, 1])
        assert [sum(m) for m in mask.per_modality] == [3, 3]

    def test_saturation_is_upper_bound(self):
        mask = naive_allocation(24, [12, 12])
        assert mask.active_count() == 24

    def test_remainder_goes_to_earlier_modalities(self):
        mask = naive_allocation(5, [4, 4])
        assert [sum(m) for m in mask.per_modality] == [3, 2]

    def test_infeasible_below_pins(self):
        with pytest.raises(BudgetError):
            naive_allocation(3, [12, 12], costs=[3, 1])

    def test_unreachable_residue_rejected(self):
        with pytest.raises(BudgetError):
            naive_allocation(13, [12, 12], costs=[3, 3])

    @pytest.mark.parametrize("budget", range(2, 25))
    def test_cost_equals_min_budget_full(self, budget):
        mask = naive_allocation(budget, [12, 12])
        assert mask.active_count() == min(budget, 24)

    def test_every_other_structure_within_modalities(self):
        mask = naive_allocation(12, [12, 12])
        keep = [i for i, b in enumerate(mask.per_modality[0]) if b]
        assert keep == every_other_keep_set(12, 6)


class TestMaskSerialization:
    def test_round_trip(self):
        text = "101001000000|100000010001"
        mask = LayerMask.from_string(text)
        assert mask.to_string() == text
        assert mask.active_count() == text.count("1")

    def test_full_and_empty(self):
        assert LayerMask.full([3, 2]).to_string() == "111|11"
        assert LayerMask.empty([3, 2]).to_string() == "000|00"
