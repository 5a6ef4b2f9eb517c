"""Reverse-mode automatic differentiation over float64 numpy arrays.

Every forward op records its parents and a closure that pushes gradient to
them; ``backward`` on a scalar runs the closures in reverse topological
order. Gradients accumulate until explicitly reset (optimizers rely on
this). Forward outputs are checked for finiteness: an op that produces NaN
or inf on finite inputs raises NumericError instead of propagating it.

Multiply-accumulate counts for every matrix product are tallied in
``MACS`` so cost reports can be checked against instrumented execution.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf as _erf

from .errors import ContractError, DimensionError, NumericError, RangeError
from .rng import RngState

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


class MacCounter:
    """Running count of multiply-accumulate ops executed by matmul."""

    __slots__ = ("count",)

    def __init__(self):
        self.count = 0

    def add(self, n: int):
        self.count += int(n)

    def reset(self):
        self.count = 0


MACS = MacCounter()


def _as_array(data) -> np.ndarray:
    return np.asarray(data, dtype=np.float64)


def _check_finite(arr: np.ndarray, op: str):
    # fast path: a non-finite element forces a non-finite sum; confirm
    # with the exact elementwise check before raising
    if not np.isfinite(arr.sum()) and not np.all(np.isfinite(arr)):
        raise NumericError(f"{op} produced a non-finite value")


class Tensor:
    """N-dimensional float64 array participating in the autodiff graph."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward_fn = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        # constants that neither report nor propagate gradient are skipped
        if not self.requires_grad and self._backward_fn is None:
            return
        if self.grad is None:
            # copy: g may alias an array shared with another node's grad
            self.grad = np.array(g)
        else:
            self.grad += g

    def backward(self):
        """Populate grads of all requires_grad ancestors of a scalar loss."""
        if self.data.size != 1:
            raise ContractError(
                f"backward() needs a scalar loss, got shape {self.data.shape}"
            )
        topo, seen, stack = [], set(), [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        # internal-node grads are per-pass workspace; only leaves accumulate
        # across repeated backward calls
        for node in topo:
            if node._backward_fn is not None:
                node.grad = None
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        return add(self, neg(_lift(other)))

    def __rsub__(self, other):
        return add(_lift(other), neg(self))

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, key):
        return getitem(self, key)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # method forms used throughout the model code
    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _needs_grad(*tensors) -> bool:
    return any(t.requires_grad or t._backward_fn is not None for t in tensors)


def _make(out_data: np.ndarray, parents, backward_fn, op: str) -> Tensor:
    _check_finite(out_data, op)
    out = Tensor(out_data)
    if _needs_grad(*parents):
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
        out.requires_grad = True
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, dim in enumerate(shape):
        if dim == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g.reshape(shape)


# -- elementwise arithmetic ------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out_data = a.data + b.data

    def backward(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(_unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), backward, "add")


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out_data = a.data * b.data

    def backward(g):
        a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(out_data, (a, b), backward, "mul")


def neg(a) -> Tensor:
    a = _lift(a)

    def backward(g):
        a._accumulate(-g)

    return _make(-a.data, (a,), backward, "neg")


def div(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out_data = a.data / b.data

    def backward(g):
        a._accumulate(_unbroadcast(g / b.data, a.data.shape))
        b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(out_data, (a, b), backward, "div")


def power(a, exponent: float) -> Tensor:
    a = _lift(a)
    p = float(exponent)
    out_data = a.data**p

    def backward(g):
        a._accumulate(g * p * a.data ** (p - 1.0))

    return _make(out_data, (a,), backward, "power")


def texp(a) -> Tensor:
    a = _lift(a)
    out_data = np.exp(a.data)

    def backward(g):
        a._accumulate(g * out_data)

    return _make(out_data, (a,), backward, "exp")


def tlog(a) -> Tensor:
    a = _lift(a)
    out_data = np.log(a.data)

    def backward(g):
        a._accumulate(g / a.data)

    return _make(out_data, (a,), backward, "log")


def tsqrt(a) -> Tensor:
    a = _lift(a)
    out_data = np.sqrt(a.data)

    def backward(g):
        a._accumulate(g * 0.5 / out_data)

    return _make(out_data, (a,), backward, "sqrt")


def tabs(a) -> Tensor:
    """|x| with subgradient 0 at x == 0."""
    a = _lift(a)

    def backward(g):
        a._accumulate(g * np.sign(a.data))

    return _make(np.abs(a.data), (a,), backward, "abs")


def gelu(a) -> Tensor:
    """Exact-erf GELU: 0.5 x (1 + erf(x / sqrt(2)))."""
    a = _lift(a)
    phi = 0.5 * (1.0 + _erf(a.data * _INV_SQRT2))
    out_data = a.data * phi

    def backward(g):
        pdf = np.exp(-0.5 * a.data * a.data) * _INV_SQRT2PI
        a._accumulate(g * (phi + a.data * pdf))

    return _make(out_data, (a,), backward, "gelu")


# -- reductions and shape ops ----------------------------------------------


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = _lift(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.data.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.data.shape).copy())

    return _make(out_data, (a,), backward, "sum")


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = _lift(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape) -> Tensor:
    a = _lift(a)
    old = a.data.shape

    def backward(g):
        a._accumulate(g.reshape(old))

    return _make(a.data.reshape(shape), (a,), backward, "reshape")


def transpose(a, axes=None) -> Tensor:
    a = _lift(a)
    out_data = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)

    def backward(g):
        a._accumulate(np.transpose(g, inv))

    return _make(out_data, (a,), backward, "transpose")


def swap_last2(a) -> Tensor:
    """Transpose the trailing two axes, keeping any batch axes in place."""
    a = _lift(a)
    axes = list(range(a.data.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, tuple(axes))


def concat(tensors, axis=0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            t._accumulate(g[tuple(idx)])

    return _make(out_data, tensors, backward, "concat")


def getitem(a, key) -> Tensor:
    a = _lift(a)
    out_data = a.data[key]

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, key, g)
        a._accumulate(full)

    return _make(out_data.copy(), (a,), backward, "getitem")


def index_select(a, axis: int, idx) -> Tensor:
    """Gather along one axis; backward scatter-adds into the source."""
    a = _lift(a)
    idx = np.asarray(idx, dtype=np.int64)
    out_data = np.take(a.data, idx, axis=axis)

    def backward(g):
        full = np.zeros_like(a.data)
        sl = [slice(None)] * a.data.ndim
        sl[axis] = idx
        np.add.at(full, tuple(sl), g)
        a._accumulate(full)

    return _make(out_data, (a,), backward, "index_select")


def stop_gradient(a) -> Tensor:
    a = _lift(a)
    return Tensor(a.data.copy())


# -- matrix product ----------------------------------------------------------


def matmul(a, b) -> Tensor:
    """(..., m, k) @ (..., k, n); leading axes broadcast numpy-style."""
    a, b = _lift(a), _lift(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise DimensionError(
            f"matmul needs >=2-d operands, got {a.data.shape} and {b.data.shape}"
        )
    if a.data.shape[-1] != b.data.shape[-2]:
        raise DimensionError(
            f"matmul inner dimensions differ: {a.data.shape} vs {b.data.shape}"
        )
    out_data = a.data @ b.data
    m, k = a.data.shape[-2], a.data.shape[-1]
    n = b.data.shape[-1]
    batch = int(np.prod(out_data.shape[:-2])) if out_data.ndim > 2 else 1
    MACS.add(batch * m * k * n)

    def backward(g):
        a._accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape))
        b._accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape))

    return _make(out_data, (a, b), backward, "matmul")


# -- composite ops -----------------------------------------------------------


def softmax(x, axis: int = -1) -> Tensor:
    """Max-stabilized softmax; rows sum to 1 along ``axis``."""
    x = _lift(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * out_data).sum(axis=axis, keepdims=True)
        x._accumulate(out_data * (g - inner))

    return _make(out_data, (x,), backward, "softmax")


def log_softmax(x, axis: int = -1) -> Tensor:
    x = _lift(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    out_data = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward(g):
        x._accumulate(g - np.exp(out_data) * g.sum(axis=axis, keepdims=True))

    return _make(out_data, (x,), backward, "log_softmax")


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Zero mean / unit variance along the last axis, then affine."""
    if eps <= 0:
        raise RangeError(f"layer_norm eps must be > 0, got {eps}")
    x, gain, bias = _lift(x), _lift(gain), _lift(bias)
    d = x.data.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    normed = centered * inv_std
    out_data = normed * gain.data + bias.data
    reduce_axes = tuple(range(out_data.ndim - 1))

    def backward(g):
        gn = g * gain.data
        # d/dx of (x - mu) * inv_std with mu, var both functions of x
        term = gn - gn.mean(axis=-1, keepdims=True) \
            - normed * (gn * normed).mean(axis=-1, keepdims=True)
        x._accumulate(term * inv_std)
        gain._accumulate((g * normed).sum(axis=reduce_axes))
        bias._accumulate(g.sum(axis=reduce_axes))

    return _make(out_data, (x, gain, bias), backward, "layer_norm")


def cross_entropy(logits, target) -> Tensor:
    """Negative log-likelihood of integer class targets.

    1-d logits take a single index; 2-d (batch, classes) logits take a
    sequence of indices and return the mean over the batch.
    """
    logits = _lift(logits)
    logp = log_softmax(logits, axis=-1)
    if logits.data.ndim == 1:
        idx = int(target)
        if not 0 <= idx < logits.data.shape[0]:
            raise RangeError(f"class index {idx} out of range [0, {logits.data.shape[0]})")
        return neg(getitem(logp, idx))
    if logits.data.ndim == 2:
        idx = np.asarray(target, dtype=np.int64)
        if idx.ndim != 1 or idx.shape[0] != logits.data.shape[0]:
            raise ContractError("cross_entropy targets must match the batch")
        if idx.min() < 0 or idx.max() >= logits.data.shape[1]:
            raise RangeError("class index out of range")
        picked = getitem(logp, (np.arange(idx.shape[0]), idx))
        return neg(tmean(picked))
    raise DimensionError(f"cross_entropy expects 1-d or 2-d logits, got {logits.data.shape}")


def mse(x, y) -> Tensor:
    """Mean (over all elements) of squared differences."""
    d = _lift(x) - _lift(y)
    return tmean(mul(d, d))


def l1(x, y) -> Tensor:
    """Sum (over all elements) of absolute differences."""
    return tsum(tabs(_lift(x) - _lift(y)))


def straight_through(hard: np.ndarray, soft: Tensor) -> Tensor:
    """Forward the hard values; backward passes gradient to ``soft`` as-is."""
    if hard.shape != soft.data.shape:
        raise DimensionError(
            f"straight_through shapes differ: {hard.shape} vs {soft.data.shape}"
        )
    return add(soft, Tensor(hard - soft.data))


def sample_gumbel(rng: RngState, shape) -> Tensor:
    """i.i.d. standard Gumbel noise; advances ``rng``."""
    return Tensor(rng.gumbel(tuple(shape)))


# -- gradient checking -------------------------------------------------------


class GradCheckReport:
    """Per-element comparison of analytic vs central-difference gradients."""

    __slots__ = ("analytic", "numeric", "rel_error", "max_rel_error", "tol", "passed")

    def __init__(self, analytic, numeric, tol):
        self.analytic = analytic
        self.numeric = numeric
        denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
        self.rel_error = np.abs(analytic - numeric) / denom
        self.max_rel_error = float(self.rel_error.max()) if analytic.size else 0.0
        self.tol = tol
        self.passed = bool(self.max_rel_error < tol)

    def __repr__(self):
        status = "pass" if self.passed else "FAIL"
        return f"GradCheckReport({status}, max_rel_error={self.max_rel_error:.3e})"


def grad_check(f, x: Tensor, h: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare f's analytic gradient at x against central differences.

    ``f`` must map a Tensor to a scalar Tensor and be deterministic; a
    second evaluation that differs bitwise raises ContractError.
    """
    if not 1e-7 <= h <= 1e-3:
        raise RangeError(f"step h must lie in [1e-7, 1e-3], got {h}")
    probe = Tensor(x.data.copy(), requires_grad=True)
    loss = f(probe)
    if not np.array_equal(loss.data, f(Tensor(x.data.copy(), requires_grad=True)).data):
        raise ContractError("grad_check requires a deterministic function")
    loss.backward()
    analytic = probe.grad.copy()

    numeric = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    for i in range(flat.size):
        bump = np.zeros_like(flat)
        bump[i] = h
        up = f(Tensor((flat + bump).reshape(x.data.shape))).item()
        down = f(Tensor((flat - bump).reshape(x.data.shape))).item()
        numeric.reshape(-1)[i] = (up - down) / (2.0 * h)
    return GradCheckReport(analytic, numeric, tol)


# -- construction helpers ----------------------------------------------------


def zeros(shape, requires_grad=False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def ones(shape, requires_grad=False) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=requires_grad)


def glorot_uniform(rng: RngState, shape, fan_in: int, fan_out: int) -> Tensor:
    """Scaled-uniform init with bound sqrt(6 / (fan_in + fan_out))."""
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    u = rng.uniform(tuple(shape))
    return Tensor((2.0 * u - 1.0) * bound, requires_grad=True)
