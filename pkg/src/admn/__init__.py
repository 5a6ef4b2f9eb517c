"""Adaptive-depth multimodal transformers with budgeted layer allocation.

The package trains per-modality transformer backbones that tolerate
missing layers (LayerDrop + full-backbone dropout), fuses them with a
transformer encoder, and learns a lightweight controller that spends a
strict per-sample layer budget across modalities according to each
input's quality.
"""

from .autodiff import Tensor, grad_check, sample_gumbel
from .budget import BudgetSpec, enforce_budget, layer_macs, plan_cost
from .controller import AllocationPlan, ControllerConfig, ControllerNet, \
    allocate, train_controller
from .data import CorruptionSpec, make_dataset
from .layerdrop import DropConfig, LayerMask, every_other_keep_set, \
    naive_allocation, sample_training_mask
from .model import MultimodalNet, MultimodalNetConfig, ModalityConfig, \
    evaluate, toy_config, train_stage1
from .rng import RngState

__version__ = "0.1.0"

__all__ = [
    "AllocationPlan", "BudgetSpec", "ControllerConfig", "ControllerNet",
    "CorruptionSpec", "DropConfig", "LayerMask", "ModalityConfig",
    "MultimodalNet", "MultimodalNetConfig", "RngState", "Tensor",
    "allocate", "enforce_budget", "evaluate", "every_other_keep_set",
    "grad_check", "layer_macs", "make_dataset", "naive_allocation",
    "plan_cost", "sample_gumbel", "sample_training_mask", "toy_config",
    "train_controller", "train_stage1",
]
