"""Seeding helpers: counter-based generators with hash-derived per-trial streams."""

from __future__ import annotations

import numpy as np

__all__ = ["make_rng", "derive_seed"]


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator for a single run."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def derive_seed(base_seed: int, *keys: int) -> int:
    """Mix ``base_seed`` with integer keys into an independent 64-bit stream seed.

    Deterministic, collision-resistant across distinct key tuples; used to give
    each trial (and each retry attempt) its own reproducible stream.
    """
    seq = np.random.SeedSequence(entropy=int(base_seed), spawn_key=tuple(int(k) for k in keys))
    words = seq.generate_state(2, dtype=np.uint32)
    return int(words[0]) | (int(words[1]) << 32)
