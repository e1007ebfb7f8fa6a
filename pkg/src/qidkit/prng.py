"""SplitMix64 random stream.

A fixed, fully specified generator so shot counts can be reproduced bit-exactly
by any reimplementation. SplitMix64 (Steele, Lea & Flood 2014; constants from
Vigna's public-domain reference code):

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    return z ^ (z >> 31)

all arithmetic modulo 2**64. The state only ever advances by the constant
increment, so draw ``i`` (0-based) equals ``mix(seed + (i + 1) * GAMMA)`` and a
block of draws can be generated in one vectorized pass.

Uniforms in [0, 1) take the top 53 bits: ``(x >> 11) * 2**-53``.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """Scalar SplitMix64 output function."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Seeded 64-bit stream with a draw counter."""

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self.position = 0

    def next_u64(self) -> int:
        self.position += 1
        return mix64(self.seed + self.position * GAMMA)

    def u64(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit outputs."""
        start = self.position + 1
        self.position += n
        idx = np.arange(start, start + n, dtype=np.uint64)
        with np.errstate(over="ignore"):
            state = np.uint64(self.seed) + idx * np.uint64(GAMMA)
        return _mix64_array(state)

    def uniforms(self, n: int) -> np.ndarray:
        """Next ``n`` doubles in [0, 1)."""
        return (self.u64(n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
