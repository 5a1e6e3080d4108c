"""Splittable random streams for reproducible parallel Monte Carlo.

Every stochastic routine in the package derives its generator from a master
seed plus an integer key path, so results are identical whether repetitions
run serially or across a worker pool.
"""

from __future__ import annotations

import numpy as np

SeedLike = int | np.random.SeedSequence


def substream(seed: SeedLike, *key: int) -> np.random.Generator:
    """Return the generator for the independent stream (seed, *key).

    Streams with distinct key paths are statistically independent; the same
    (seed, key) always yields the same stream.
    """
    if isinstance(seed, np.random.SeedSequence):
        if key:
            seed = np.random.SeedSequence(
                entropy=seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(key)
            )
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(key)))


def child_seed(seed: SeedLike, *key: int) -> int:
    """Derive a 64-bit integer seed for the stream (seed, *key).

    Used where a plain integer must be stored in a config or result bundle.
    """
    if isinstance(seed, np.random.SeedSequence):
        ss = np.random.SeedSequence(
            entropy=seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(key)
        )
    else:
        ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))
    return int(ss.generate_state(1, np.uint64)[0])
