"""Counter-based random stream.

Every draw derives a fresh generator from ``(seed, counter)`` and then bumps
the counter, so a stream's full history is reproducible from those two
integers alone.
"""

from __future__ import annotations

import numpy as np

_TINY = np.finfo(np.float64).tiny


class RngStream:
    def __init__(self, seed: int = 0, counter: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.counter = int(counter) & 0xFFFFFFFFFFFFFFFF

    def __repr__(self):
        return f"RngStream(seed={self.seed}, counter={self.counter})"

    def _next(self) -> np.random.Generator:
        gen = np.random.default_rng([self.seed, self.counter])
        self.counter = (self.counter + 1) & 0xFFFFFFFFFFFFFFFF
        return gen

    def fork(self) -> "RngStream":
        """Independent child stream; advances this stream by one draw."""
        child_seed = int(self._next().integers(0, 2**63 - 1))
        return RngStream(child_seed)

    def uniform(self, shape=(), low=0.0, high=1.0) -> np.ndarray:
        return self._next().uniform(low, high, size=shape)

    def normal(self, shape=(), scale=1.0) -> np.ndarray:
        return self._next().normal(0.0, scale, size=shape)

    def integers(self, low, high=None, shape=None):
        return self._next().integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._next().permutation(n)

    def bernoulli(self, p: float, shape) -> np.ndarray:
        return self._next().random(shape) < p

    def gumbel(self, shape) -> np.ndarray:
        """Standard Gumbel(0, 1) draws via ``-log(-log(u))``."""
        u = self._next().random(shape)
        u = np.clip(u, _TINY, 1.0 - 1e-16)
        return -np.log(-np.log(u))
