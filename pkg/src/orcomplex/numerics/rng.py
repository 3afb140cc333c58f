from __future__ import annotations

import numpy as np


class RngStream:
    """Seeded PCG64 stream; ``spawn`` derives independent child streams by key."""

    def __init__(self, seed: int, *key: int) -> None:
        if seed < 0 or seed >= 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        self.generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, *self.key])))

    def spawn(self, *key: int) -> "RngStream":
        return RngStream(self.seed, *self.key, *key)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def choice(self, a, size=None, replace=True, p=None):
        return self.generator.choice(a, size=size, replace=replace, p=p)

    def permutation(self, x):
        return self.generator.permutation(x)

    def unit_vectors(self, n: int, dim: int) -> np.ndarray:
        v = self.generator.normal(size=(n, dim))
        return v / np.linalg.norm(v, axis=1, keepdims=True)
