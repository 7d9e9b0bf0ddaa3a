"""Vose alias tables for O(1) categorical draws."""
from dataclasses import dataclass

import numpy as np


@dataclass
class AliasTable:
    probs: np.ndarray  # acceptance threshold per column
    alias: np.ndarray  # fallback outcome per column

    @classmethod
    def make(cls, weights) -> 'AliasTable':
        weights = np.asarray(weights, dtype=float)
        assert weights.ndim == 1 and len(weights) > 0
        assert np.all(weights >= 0) and weights.sum() > 0, 'weights must be non-negative with positive sum'
        n = len(weights)
        probs = weights / weights.sum() * n
        alias = np.arange(n)

        small = [i for i in range(n) if probs[i] < 1.]
        large = [i for i in range(n) if probs[i] >= 1.]
        while small and large:
            s = small.pop()
            l = large.pop()
            alias[s] = l
            probs[l] = (probs[l] + probs[s]) - 1.
            if probs[l] < 1.:
                small.append(l)
            else:
                large.append(l)
        # leftovers are 1 up to rounding; zero-weight leftovers must stay unreachable
        for i in small + large:
            if weights[i] > 0:
                probs[i] = 1.
            else:
                probs[i] = 0.
                alias[i] = int(np.argmax(weights))
        return cls(np.clip(probs, 0., 1.), alias)

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        columns = rng.integers(0, len(self.probs), size=size)
        accept = rng.random(size) < self.probs[columns]
        return np.where(accept, columns, self.alias[columns])
