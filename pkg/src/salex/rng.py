"""Deterministic random-number state.

All stochastic operations (dropout masks, random crops, weight init, shuffles)
take an explicit RngState so a fixed seed reproduces a run bit-for-bit.
The underlying generator is NumPy's PCG64, which produces identical streams
for identical seeds on every supported platform.
"""

from __future__ import annotations

import zlib

import numpy as np

ALGORITHM = "pcg64"


class RngState:
    """A seeded PCG64 stream plus the seed that created it."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.algorithm = ALGORITHM
        self.generator = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, tag: str) -> "RngState":
        """Derive an independent stream keyed by (seed, tag).

        Used so that e.g. dropout and crop sampling draw from separate
        streams and adding a consumer does not perturb the others.
        """
        mixed = np.random.SeedSequence([self.seed, zlib.crc32(tag.encode())])
        rng = RngState.__new__(RngState)
        rng.seed = self.seed
        rng.algorithm = ALGORITHM
        rng.generator = np.random.Generator(np.random.PCG64(mixed))
        return rng

    def __repr__(self) -> str:
        return f"RngState(seed={self.seed}, algorithm={self.algorithm!r})"
