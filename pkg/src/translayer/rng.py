"""Deterministic randomness with one independent stream per pipeline stage.

Every stochastic step (patch sampling, autoencoder init, corruption masks,
SGD shuffling, SVM pass ordering) pulls its own named stream so that adding
draws to one stage never perturbs another. Streams are PCG64 generators
keyed by ``SeedSequence(seed, spawn_key=(crc32(label),))``, which is stable
across platforms and numpy releases.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

_U64 = 2**64


@dataclass(frozen=True)
class Rng:
    """Root seed for a run. Identical seeds give bit-identical streams."""

    seed: int

    def __post_init__(self):
        if not 0 <= int(self.seed) < _U64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    def stream(self, label: str) -> np.random.Generator:
        """Return the generator for a named stage, always freshly seeded."""
        key = zlib.crc32(label.encode("utf-8"))
        seq = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(key,))
        return np.random.Generator(np.random.PCG64(seq))
