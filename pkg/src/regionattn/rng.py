"""SplitMix64 stream with vectorized draws.

The n-th output (1-based) of a SplitMix64 generator seeded with ``s`` is
``mix(s + n * GAMMA)``, so a block of outputs can be produced at once with
wrapping uint64 arithmetic instead of a Python loop.
"""

from __future__ import annotations

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Deterministic 64-bit stream. Every draw advances a shared counter."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self.count = 0

    def next_u64(self, n: int) -> np.ndarray:
        idx = np.arange(self.count + 1, self.count + n + 1, dtype=np.uint64)
        self.count += n
        with np.errstate(over="ignore"):
            state = np.uint64(self.seed) + idx * np.uint64(GAMMA)
            return _mix(state)

    def uniform(self, n: int) -> np.ndarray:
        """n doubles in [0, 1) from the top 53 bits of each output."""
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * (2.0**-53)

    def uniform_range(self, shape, low: float, high: float) -> np.ndarray:
        n = int(np.prod(shape))
        return (low + (high - low) * self.uniform(n)).reshape(shape)

    def normal(self, n: int) -> np.ndarray:
        """n standard normals via Box-Muller; pairs are (cos, sin) interleaved."""
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        u1 = 1.0 - u[:, 0]  # (0, 1], keeps log finite
        radius = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u[:, 1]
        out = np.empty((pairs, 2))
        out[:, 0] = radius * np.cos(theta)
        out[:, 1] = radius * np.sin(theta)
        return out.reshape(-1)[:n]
