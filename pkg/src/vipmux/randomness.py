"""Reproducible, splittable random sources.

Every stochastic operation in the package takes a numpy ``Generator`` derived
from a single root seed, so simulations and estimates replay exactly.  An
external entropy supplier (e.g. ``os.urandom``) can be mixed in when
reproducibility is not wanted.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int | None = None, entropy: bytes | None = None) -> np.random.Generator:
    """Build a generator from a seed, optionally salted with external entropy."""
    if entropy is not None:
        pool: list[int] = [] if seed is None else [seed]
        pool.append(int.from_bytes(entropy, "big"))
        return np.random.default_rng(np.random.SeedSequence(pool))
    return np.random.default_rng(seed)


def spawn_seeds(seed: int | None, n: int) -> list[np.random.SeedSequence]:
    """Split one seed into ``n`` independent child sequences."""
    return list(np.random.SeedSequence(seed).spawn(n))


def spawn_rngs(seed: int | None, n: int) -> list[np.random.Generator]:
    """Independent generators for parallel or multi-stream use."""
    return [np.random.default_rng(ss) for ss in spawn_seeds(seed, n)]
