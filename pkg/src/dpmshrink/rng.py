"""Seeded random streams with derivable substreams.

A single master seed must reproduce every draw in the package bit for bit.
Substreams (one per chain, per fold, per purpose) are derived through
``numpy.random.SeedSequence`` spawn keys, so they are independent and stable
across runs regardless of how many draws each consumes.
"""

from __future__ import annotations

import numpy as np


class RngStream:
    """A deterministic random stream addressed by (seed, key path).

    Wraps a PCG64 ``numpy.random.Generator``. Two streams built from the
    same seed and key path produce identical sequences; streams with
    different key paths are statistically independent.
    """

    __slots__ = ("seed", "key", "_gen")

    def __init__(self, seed: int, key: tuple[int, ...] = ()):
        if not (0 <= int(seed) < 2**64):
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    @property
    def gen(self) -> np.random.Generator:
        return self._gen

    def substream(self, *indices: int) -> "RngStream":
        """Derive an independent stream keyed by integer indices."""
        return RngStream(self.seed, self.key + tuple(indices))

    def __repr__(self) -> str:  # pragma: no cover
        return f"RngStream(seed={self.seed}, key={self.key})"
