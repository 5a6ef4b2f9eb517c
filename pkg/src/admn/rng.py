"""Deterministic counter-based random number generation.

A draw stream is fully described by ``(seed, position)``: output ``i`` of a
stream is ``mix64(seed + (position + i + 1) * GOLDEN)`` where ``mix64`` is the
SplitMix64 finalizer. Identical state yields bit-identical sequences on every
platform, and any position can be reached in O(1), so replay and resumption
are exact.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# open-interval clamp for draws feeding log(); see sample_gumbel
UNIFORM_EPS = 1e-12


def _mix64(x: np.ndarray) -> np.ndarray:
    # uint64 wrap-around is the intended arithmetic here
    with np.errstate(over="ignore"):
        x = (x ^ (x >> np.uint64(30))) * _MIX1
        x = (x ^ (x >> np.uint64(27))) * _MIX2
        return x ^ (x >> np.uint64(31))


def derive_seed(seed: int, tag: int) -> int:
    """Stable sub-seed for stream ``tag`` of a parent ``seed``."""
    base = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    t = np.uint64(tag & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        return int(_mix64(base ^ _mix64(t + _GOLDEN)))


class RngState:
    """Counter-based PRNG with explicit (seed, position) state."""

    __slots__ = ("seed", "position")

    def __init__(self, seed: int, position: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.position = int(position)

    def clone(self) -> "RngState":
        return RngState(self.seed, self.position)

    def spawn(self, tag: int) -> "RngState":
        """Independent child stream; does not advance this stream."""
        return RngState(derive_seed(self.seed, tag))

    def _raw(self, n: int) -> np.ndarray:
        with np.errstate(over="ignore"):
            counters = np.uint64(self.seed) + (
                np.arange(self.position + 1, self.position + n + 1, dtype=np.uint64)
                * _GOLDEN
            )
        self.position += n
        return _mix64(counters)

    def uniform(self, shape=()) -> np.ndarray:
        """i.i.d. draws in the open interval (0, 1)."""
        n = int(np.prod(shape)) if shape else 1
        # +0.5 centers each 53-bit lattice cell, excluding both endpoints
        u = ((self._raw(n) >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
        return u.reshape(shape) if shape else float(u[0])

    def normal(self, shape=()) -> np.ndarray:
        """i.i.d. standard normal draws via Box-Muller (2 uniforms per pair)."""
        n = int(np.prod(shape)) if shape else 1
        m = (n + 1) // 2
        u = ((self._raw(2 * m) >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
        u1, u2 = u[:m], u[m:]
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return z.reshape(shape) if shape else float(z[0])

    def gumbel(self, shape=()) -> np.ndarray:
        """i.i.d. standard Gumbel draws -log(-log(u)), u clamped off {0, 1}."""
        n = int(np.prod(shape)) if shape else 1
        u = ((self._raw(n) >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
        u = np.clip(u, UNIFORM_EPS, 1.0 - UNIFORM_EPS)
        g = -np.log(-np.log(u))
        return g.reshape(shape) if shape else float(g[0])

    def integers(self, high: int, shape=()) -> np.ndarray:
        """Draws from {0, ..., high-1} (uniform up to 2^-53 quantization)."""
        n = int(np.prod(shape)) if shape else 1
        u = ((self._raw(n) >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
        k = np.minimum((u * high).astype(np.int64), high - 1)
        return k.reshape(shape) if shape else int(k[0])

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic permutation of range(n) (argsort of n uniforms)."""
        return np.argsort(self.uniform((n,)), kind="stable")

    def __repr__(self):
        return f"RngState(seed={self.seed}, position={self.position})"
