"""Portable seeded generator: xorshift64* seeded through splitmix64.

Every draw is fully specified here so synthetic data and initialisations can
be reproduced bit-for-bit by any implementation:

* seeding: ``state = splitmix64(seed)``; a zero result is replaced by
  ``0x9E3779B97F4A7C15``.
* ``next_u64``: ``x ^= x >> 12; x ^= x << 25; x ^= x >> 27`` (64-bit),
  output ``x * 0x2545F4914F6CDD1D mod 2**64``.
* ``uniform``: ``(next_u64 >> 11) * 2**-53`` in [0, 1).
* ``normal``: Box-Muller from two uniforms ``u1, u2``:
  ``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)``; the sine partner is discarded.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    z = (x + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class XorShift64Star:
    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError("seed must be an unsigned integer")
        state = splitmix64(seed & _MASK)
        self._state = state or _GOLDEN

    def next_u64(self) -> int:
        x = self._state
        x ^= x >> 12
        x = (x ^ (x << 25)) & _MASK
        x ^= x >> 27
        self._state = x
        return (x * 0x2545F4914F6CDD1D) & _MASK

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        u = (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)
        return lo + (hi - lo) * u

    def normal(self, mean: float = 0.0, sd: float = 1.0) -> float:
        u1 = self.uniform()
        u2 = self.uniform()
        z = math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(2.0 * math.pi * u2)
        return mean + sd * z

    def uniform_array(self, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        return np.array([self.uniform(lo, hi) for _ in range(n)], dtype=np.float64)

    def normal_array(self, n: int, mean: float = 0.0, sd: float = 1.0) -> np.ndarray:
        return np.array([self.normal(mean, sd) for _ in range(n)], dtype=np.float64)
