"""Seeded, counter-based random streams.

Every consumer draws from a child stream derived from ``(seed, *names)`` so
that adding a consumer never shifts the numbers another one sees.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(name) -> int:
    if isinstance(name, (int, np.integer)):
        return int(name) & 0xFFFFFFFF
    return zlib.crc32(str(name).encode("utf-8"))


class Rng:
    def __init__(self, seed: int, path: tuple = ()):
        self.seed = int(seed)
        self.path = tuple(path)
        entropy = [self.seed & 0xFFFFFFFF, (self.seed >> 32) & 0xFFFFFFFF] + [_key(p) for p in self.path]
        self.generator = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

    def child(self, *names) -> "Rng":
        return Rng(self.seed, self.path + names)

    def uniform(self, low, high, size=None, dtype=np.float64):
        return self.generator.uniform(low, high, size).astype(dtype)

    def normal(self, loc=0.0, scale=1.0, size=None, dtype=np.float64):
        return self.generator.normal(loc, scale, size).astype(dtype)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def permutation(self, n):
        return self.generator.permutation(n)

    def choice(self, a, size=None, replace=True):
        return self.generator.choice(a, size=size, replace=replace)

    def __repr__(self):
        return f"Rng(seed={self.seed}, path={self.path})"
