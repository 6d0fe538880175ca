"""Counter-based random streams keyed by a master seed and an index path."""

from __future__ import annotations

import numpy as np

SEED_MASK = (1 << 64) - 1


def make_rng(seed: int, *path: int) -> np.random.Generator:
    """Philox generator for the node ``path`` below ``seed``.

    Streams at distinct paths are statistically independent, and the
    stream for a given ``(seed, path)`` never depends on call order, which
    is what keeps serial and parallel runs identical.
    """
    ss = np.random.SeedSequence(int(seed) & SEED_MASK, spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *path: int) -> int:
    ss = np.random.SeedSequence(int(seed) & SEED_MASK, spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, np.uint64)[0])
