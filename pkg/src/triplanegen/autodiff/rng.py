"""Deterministic random streams.

One RandomSource per logical consumer. Child streams are derived from
(seed, tag) via sha256, so the same seed and tag pair always yields the
same stream regardless of call order elsewhere. This is what makes
checkpoint-resume bit-exact: each training step draws from a stream
derived from the step index instead of consuming a shared stateful
generator.
"""

from __future__ import annotations

import hashlib

import numpy as np

ALGORITHM = "pcg64-sha256child-v1"


def _derive(seed: int, tag: str) -> int:
    digest = hashlib.sha256(f"{seed}:{tag}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class RandomSource:
    def __init__(self, seed: int):
        self.seed = int(seed)
        self.algorithm = ALGORITHM
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, tag: str) -> "RandomSource":
        return RandomSource(_derive(self.seed, tag))

    # Thin pass-throughs; keep the draw surface small and auditable.

    def normal(self, shape, dtype=np.float64) -> np.ndarray:
        return self._gen.standard_normal(size=shape, dtype=np.float64).astype(dtype, copy=False)

    def uniform(self, shape, low: float = 0.0, high: float = 1.0, dtype=np.float64) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape).astype(dtype, copy=False)

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def multinomial(self, n: int, probs: np.ndarray) -> np.ndarray:
        return self._gen.multinomial(n, probs)
