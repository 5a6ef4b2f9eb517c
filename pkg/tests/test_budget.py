"""Cost model: analytic MAC counts, strict budget checks, instrumentation."""

import numpy as np
import pytest

from admn import autodiff as ad
from admn.autodiff import Tensor
from admn.budget import BudgetSpec, BudgetViolation, conv_macs, enforce_budget, \
    layer_macs, linear_macs, plan_cost, write_flops_csv, FlopsReport
from admn.errors import BudgetError, RangeError
from admn.layerdrop import LayerMask
from admn.layers import ConvLayerParams, conv2d_forward, mha_forward, \
    transformer_layer_forward, TransformerLayerParams
from admn.model import MultimodalNet, mask_activities, plan_model_macs, toy_config
from admn.rng import RngState


class TestBudgetSpec:
    def test_costs_must_be_positive_integers(self):
        with pytest.raises(RangeError):
            BudgetSpec(budget=4, costs=(1, 0))

    def test_budget_below_pins_rejected(self):
        with pytest.raises(BudgetError):
            BudgetSpec(budget=3, costs=(3, 1))

    def test_pinned_cost(self):
        assert BudgetSpec(budget=12, costs=(3, 1)).pinned_cost == 4


class TestLayerMacs:
    def test_documented_formula_point(self):
        # attention 4*t*d^2 + 2*t^2*d, mlp 8*t*d^2; lower-order terms are
        # exactly zero by the matmul-only counting rule
        assert layer_macs(1, 8) == 4 * 64 + 2 * 8 + 8 * 64 == 784

    def test_quadratic_homogeneity_in_dim(self):
        t, d = 5, 16
        quad = layer_macs(t, d) - 2 * t * t * d
        quad2 = layer_macs(t, 2 * d) - 2 * t * t * 2 * d
        assert quad2 == 4 * quad

    def test_instrumented_transformer_layer_matches(self):
        p = TransformerLayerParams.init(RngState(1), 8, 2)
        x = Tensor(RngState(2).normal((3, 8)))
        ad.MACS.reset()
        transformer_layer_forward(x, p, True)
        assert ad.MACS.count == layer_macs(3, 8)

    def test_instrumented_batched_layer_matches(self):
        p = TransformerLayerParams.init(RngState(3), 8, 4)
        x = Tensor(RngState(4).normal((5, 3, 8)))
        ad.MACS.reset()
        transformer_layer_forward(x, p, True)
        assert ad.MACS.count == 5 * layer_macs(3, 8)

    def test_dropped_layer_is_zero(self):
        p = TransformerLayerParams.init(RngState(5), 8, 2)
        x = Tensor(RngState(6).normal((3, 8)))
        ad.MACS.reset()
        transformer_layer_forward(x, p, False)
        assert ad.MACS.count == 0

    def test_instrumented_conv_matches(self):
        p = ConvLayerParams.init(RngState(7), 3, 2, 4, stride=2)
        x = Tensor(RngState(8).normal((2, 7, 7)))
        ad.MACS.reset()
        conv2d_forward(x, p)
        assert ad.MACS.count == conv_macs(3, 3, 3, 2, 4)


class TestPlanCost:
    def test_unequal_cost_case(self):
        mask = LayerMask([[True] * 3 + [False] * 9, [True] * 3 + [False] * 9])
        spec = BudgetSpec(budget=12, costs=(3, 1))
        assert plan_cost(mask, spec) == 12

    def test_empty_plan(self):
        spec = BudgetSpec(budget=2, costs=(1, 1))
        assert plan_cost(LayerMask.empty([12, 12]), spec) == 0

    def test_full_network_equal_costs(self):
        spec = BudgetSpec(budget=24, costs=(1, 1))
        assert plan_cost(LayerMask.full([12, 12]), spec) == 24

    def test_linearity_over_disjoint_masks(self):
        rng = RngState(9)
        spec = BudgetSpec(budget=4, costs=(3, 1))
        a = rng.uniform((24,)) < 0.4
        b = (rng.uniform((24,)) < 0.4) & ~a
        def to_mask(flags):
            return LayerMask([flags[:12].tolist(), flags[12:].tolist()])
        union = to_mask(a | b)
        assert plan_cost(union, spec) \
            == plan_cost(to_mask(a), spec) + plan_cost(to_mask(b), spec)


class TestEnforceBudget:
    def test_exact_plan_passes(self):
        mask = LayerMask([[True, False, True, False], [True, True, False, False]])
        assert enforce_budget(mask, BudgetSpec(budget=4, costs=(1, 1))) is None

    def test_excess_reported(self):
        mask = LayerMask([[True] * 4, [True] * 3 + [False]])
        violation = enforce_budget(mask, BudgetSpec(budget=6, costs=(1, 1)))
        assert violation.kind == "excess" and violation.amount == 1

    def test_missing_pin_reported(self):
        mask = LayerMask([[False, True, True, False], [True, True, False, False]])
        violation = enforce_budget(mask, BudgetSpec(budget=4, costs=(1, 1)))
        assert violation.kind == "pin"


class TestModelPlanMacs:
    def test_instrumented_equals_analytic_for_full_and_partial(self):
        cfg = toy_config()
        net = MultimodalNet(cfg, RngState(10))
        inputs = [Tensor(RngState(20 + m).normal((2, 1, 16, 16)))
                  for m in range(2)]
        for mask_string in ("1111|1111", "1001|1001", "1000|1011", "0000|0000"):
            mask = LayerMask.from_string(mask_string)
            ad.MACS.reset()
            net.forward(inputs, mask_activities(mask))
            assert ad.MACS.count == 2 * plan_model_macs(cfg, mask), mask_string

    def test_backbone_ratio_tracks_active_layers(self):
        # backbone-only MACs scale exactly with the active-layer count
        cfg = toy_config()
        full = plan_model_macs(cfg, LayerMask.full(cfg.depths))
        half = plan_model_macs(cfg, LayerMask.from_string("1001|1001"))
        none = plan_model_macs(cfg, LayerMask.empty(cfg.depths))
        assert (half - none) / (full - none) == pytest.approx(0.5, abs=1e-12)


def test_write_flops_csv(tmp_path):
    report = FlopsReport(backbone_macs=100.0, fusion_macs=50.0, head_macs=10.0,
                         controller_macs=8.0)
    path = tmp_path / "report.csv"
    write_flops_csv(path, [(4, "ADMN", report, 0.123)])
    lines = path.read_text().splitlines()
    assert lines[0].startswith("budget,provider,mean_flops")
    assert lines[1].split(",")[0] == "4"
    assert float(lines[1].split(",")[2]) == 168.0
    assert float(lines[1].split(",")[4]) == pytest.approx(8.0 / 168.0)
