"""Adam optimizer with optional frozen parameters and linear LR decay."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .errors import ContractError


class Adam:
    """Standard Adam over a named parameter dict.

    Names in ``frozen`` never receive updates (their grads are ignored and
    cleared). State is exposed for exact checkpoint/resume.
    """

    def __init__(self, params: dict[str, Tensor], lr: float,
                 betas=(0.9, 0.999), eps: float = 1e-8, frozen=()):
        self.params = dict(params)
        self.lr = float(lr)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.frozen = set(frozen)
        unknown = self.frozen - set(self.params)
        if unknown:
            raise ContractError(f"frozen names not in params: {sorted(unknown)}")
        self.step_count = 0
        self.m = {k: np.zeros_like(t.data) for k, t in self.params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in self.params.items()}

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def step(self):
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.step_count
        bias2 = 1.0 - b2**self.step_count
        for name, t in self.params.items():
            if name in self.frozen or t.grad is None:
                continue
            g = t.grad
            self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            self.v[name] = b2 * self.v[name] + (1.0 - b2) * (g * g)
            m_hat = self.m[name] / bias1
            v_hat = self.v[name] / bias2
            t.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Flat name->array view of the optimizer state for checkpointing."""
        out = {"_adam.step_count": np.array([float(self.step_count)]),
               "_adam.lr": np.array([self.lr])}
        for k in self.params:
            out[f"_adam.m.{k}"] = self.m[k]
            out[f"_adam.v.{k}"] = self.v[k]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]):
        self.step_count = int(arrays["_adam.step_count"][0])
        self.lr = float(arrays["_adam.lr"][0])
        for k in self.params:
            self.m[k] = arrays[f"_adam.m.{k}"].copy()
            self.v[k] = arrays[f"_adam.v.{k}"].copy()


def linear_decay_lr(base_lr: float, epoch: int, total_epochs: int) -> float:
    """lr for ``epoch`` (0-based): base at epoch 0, base/total at the last."""
    if total_epochs < 1:
        raise ContractError("total_epochs must be >= 1")
    return base_lr * (total_epochs - epoch) / total_epochs
