"""Transformer encoder layers, patch embedding, and small convolutions.

All forwards accept either a single sample (t, d) / (c, H, W) or a batched
input with one extra leading axis; shapes are preserved. Layers are pure
functions of (params, input, activity), so a deactivated layer is an exact
identity: callers get back the same tensor object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DimensionError
from .rng import RngState

MLP_WIDTH_FACTOR = 4


@dataclass
class TransformerLayerParams:
    """Pre-norm encoder layer: q/k/v/o projections plus a 2-layer MLP."""

    dim: int
    heads: int
    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    w_up: Tensor
    w_down: Tensor
    ln1_gain: Tensor
    ln1_bias: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor

    def __post_init__(self):
        if self.dim % self.heads != 0:
            raise ConfigError(f"heads {self.heads} must divide dim {self.dim}")

    @classmethod
    def init(cls, rng: RngState, dim: int, heads: int) -> "TransformerLayerParams":
        if dim % heads != 0:
            raise ConfigError(f"heads {heads} must divide dim {dim}")
        hidden = MLP_WIDTH_FACTOR * dim
        proj = lambda: ad.glorot_uniform(rng, (dim, dim), dim, dim)
        return cls(
            dim=dim,
            heads=heads,
            wq=proj(),
            wk=proj(),
            wv=proj(),
            wo=proj(),
            w_up=ad.glorot_uniform(rng, (dim, hidden), dim, hidden),
            w_down=ad.glorot_uniform(rng, (hidden, dim), hidden, dim),
            ln1_gain=ad.ones((dim,), requires_grad=True),
            ln1_bias=ad.zeros((dim,), requires_grad=True),
            ln2_gain=ad.ones((dim,), requires_grad=True),
            ln2_bias=ad.zeros((dim,), requires_grad=True),
        )

    def named(self, prefix: str):
        for attr in (
            "wq", "wk", "wv", "wo", "w_up", "w_down",
            "ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias",
        ):
            yield f"{prefix}.{attr}", getattr(self, attr)


@dataclass
class ConvLayerParams:
    """Valid-padding 2-d convolution weights."""

    kernel: int
    in_channels: int
    out_channels: int
    stride: int
    weight: Tensor
    bias: Tensor
    _index_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kernel % 2 == 0:
            raise ConfigError(f"kernel size must be odd, got {self.kernel}")
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")

    @classmethod
    def init(cls, rng: RngState, kernel: int, in_channels: int, out_channels: int,
             stride: int = 1) -> "ConvLayerParams":
        fan_in = in_channels * kernel * kernel
        return cls(
            kernel=kernel,
            in_channels=in_channels,
            out_channels=out_channels,
            stride=stride,
            weight=ad.glorot_uniform(
                rng, (out_channels, in_channels, kernel, kernel), fan_in, out_channels
            ),
            bias=ad.zeros((out_channels,), requires_grad=True),
        )

    def named(self, prefix: str):
        yield f"{prefix}.weight", self.weight
        yield f"{prefix}.bias", self.bias


def mha_forward(x: Tensor, p: TransformerLayerParams) -> Tensor:
    """Scaled dot-product multi-head self-attention, shape-preserving."""
    head_dim = p.dim // p.heads
    scale = 1.0 / math.sqrt(head_dim)
    t = x.shape[-2]
    single = x.ndim == 2

    def split_heads(y: Tensor) -> Tensor:
        if single:
            return y.reshape(t, p.heads, head_dim).transpose(1, 0, 2)
        return y.reshape(y.shape[0], t, p.heads, head_dim).transpose(0, 2, 1, 3)

    q = split_heads(x @ p.wq)
    k = split_heads(x @ p.wk)
    v = split_heads(x @ p.wv)
    attn = ad.softmax((q @ ad.swap_last2(k)) * scale, axis=-1)
    heads = attn @ v
    if single:
        merged = heads.transpose(1, 0, 2).reshape(t, p.dim)
    else:
        merged = heads.transpose(0, 2, 1, 3).reshape(heads.shape[0], t, p.dim)
    return merged @ p.wo


def _mlp(x: Tensor, p: TransformerLayerParams) -> Tensor:
    return ad.gelu(x @ p.w_up) @ p.w_down


def transformer_layer_forward(x: Tensor, p: TransformerLayerParams, active) -> Tensor:
    """Pre-norm residual block; ``active`` may be a bool or a scalar gate.

    active=False returns ``x`` itself (bit-identical identity). A tensor
    gate multiplies both residual branches, so gate 0 is the same identity
    while keeping the gate on the gradient path.
    """
    if active is False:
        return x
    attn = mha_forward(ad.layer_norm(x, p.ln1_gain, p.ln1_bias), p)
    if active is not True:
        attn = attn * active
    h = x + attn
    ff = _mlp(ad.layer_norm(h, p.ln2_gain, p.ln2_bias), p)
    if active is not True:
        ff = ff * active
    return h + ff


def sinusoidal_positions(tokens: int, dim: int) -> np.ndarray:
    """Fixed sin/cos positional table of shape (tokens, dim)."""
    pos = np.arange(tokens, dtype=np.float64)[:, None]
    idx = np.arange(dim, dtype=np.float64)[None, :]
    angles = pos / np.power(10000.0, 2.0 * np.floor(idx / 2.0) / dim)
    table = np.where(idx % 2 == 0, np.sin(angles), np.cos(angles))
    return table


def patch_embed(image: Tensor, patch: int, proj: Tensor) -> Tensor:
    """Split (c, H, W) into non-overlapping patches and project to tokens."""
    single = image.ndim == 3
    x = image.reshape((1,) + image.shape) if single else image
    _, c, height, width = x.shape
    if height % patch or width % patch:
        raise ConfigError(f"patch {patch} must divide image {height}x{width}")
    gh, gw = height // patch, width // patch
    tokens = gh * gw
    flat_dim = c * patch * patch
    if proj.shape[0] != flat_dim:
        raise DimensionError(f"projection expects {proj.shape[0]} inputs, got {flat_dim}")
    x = x.reshape(-1, c, gh, patch, gw, patch)
    x = x.transpose(0, 2, 4, 1, 3, 5)
    x = x.reshape(-1, tokens, flat_dim)
    out = x @ proj
    return out[0] if single else out


def add_positional(x: Tensor) -> Tensor:
    """Add the fixed sinusoidal table for the token axis."""
    tokens, dim = x.shape[-2], x.shape[-1]
    return x + Tensor(sinusoidal_positions(tokens, dim))


def _conv_gather_indices(p: ConvLayerParams, height: int, width: int) -> np.ndarray:
    key = (height, width)
    cached = p._index_cache.get(key)
    if cached is not None:
        return cached
    k, s, ci = p.kernel, p.stride, p.in_channels
    oh = (height - k) // s + 1
    ow = (width - k) // s + 1
    idx = np.empty((oh * ow, ci * k * k), dtype=np.int64)
    n = 0
    for oy in range(oh):
        for ox in range(ow):
            window = [
                c * height * width + (oy * s + ky) * width + (ox * s + kx)
                for c in range(ci)
                for ky in range(k)
                for kx in range(k)
            ]
            idx[n] = window
            n += 1
    p._index_cache[key] = idx
    return idx


def conv2d_forward(x: Tensor, p: ConvLayerParams) -> Tensor:
    """Valid-padding cross-correlation plus bias."""
    single = x.ndim == 3
    xb = x.reshape((1,) + x.shape) if single else x
    batch, ci, height, width = xb.shape
    if ci != p.in_channels:
        raise DimensionError(f"expected {p.in_channels} channels, got {ci}")
    if height < p.kernel or width < p.kernel:
        raise DimensionError(
            f"input {height}x{width} smaller than kernel {p.kernel}"
        )
    k, s = p.kernel, p.stride
    oh = (height - k) // s + 1
    ow = (width - k) // s + 1
    idx = _conv_gather_indices(p, height, width)
    flat = xb.reshape(batch, ci * height * width)
    patches = ad.index_select(flat, 1, idx.reshape(-1))
    patches = patches.reshape(batch, oh * ow, ci * k * k)
    kernel_mat = p.weight.reshape(p.out_channels, ci * k * k)
    out = patches @ ad.swap_last2(kernel_mat) + p.bias
    out = out.transpose(0, 2, 1).reshape(batch, p.out_channels, oh, ow)
    return out[0] if single else out
