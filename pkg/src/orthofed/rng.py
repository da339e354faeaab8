"""Portable deterministic randomness.

All stochastic choices in the package (dataset splits, synthetic data,
classifier initialization, mini-batch shuffling) flow through SplitMix64
so that a given seed reproduces byte-identical results anywhere, and
through ``derive_seed`` so that independent streams (per client, per
round, per purpose) never alias.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(*parts: int | str) -> int:
    """Hash a tuple of ints/strings into a 64-bit sub-stream seed."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        if isinstance(part, str):
            h.update(b"s" + part.encode("utf-8"))
        else:
            h.update(b"i" + int(part).to_bytes(16, "little", signed=True))
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "little")


class SplitMix64:
    """SplitMix64 generator with uniform/normal/shuffle helpers."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64
        self._spare_normal: float | None = None

    def next_uint64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def integer(self, bound: int) -> int:
        """Integer in [0, bound). Modulo bias is negligible for bound << 2^64."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return self.next_uint64() % bound

    def uniform(self) -> float:
        # 53 significant bits, [0, 1)
        return (self.next_uint64() >> 11) * (1.0 / (1 << 53))

    def normal(self) -> float:
        if self._spare_normal is not None:
            value = self._spare_normal
            self._spare_normal = None
            return value
        # Box-Muller; u1 kept away from 0 so log() is finite
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        radius = math.sqrt(-2.0 * math.log(u1))
        self._spare_normal = radius * math.sin(2.0 * math.pi * u2)
        return radius * math.cos(2.0 * math.pi * u2)

    def normals(self, count: int) -> np.ndarray:
        return np.array([self.normal() for _ in range(count)], dtype=np.float64)

    def uniforms(self, count: int) -> np.ndarray:
        return np.array([self.uniform() for _ in range(count)], dtype=np.float64)

    def permutation(self, count: int) -> np.ndarray:
        """Fisher-Yates permutation of range(count)."""
        perm = np.arange(count, dtype=np.int64)
        for i in range(count - 1, 0, -1):
            j = self.integer(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm
