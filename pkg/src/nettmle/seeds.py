"""Deterministic RNG streams derived from a master seed.

Every stochastic routine in the package takes a seed and derives its
generator as ``child_rng(seed, *path)`` where ``path`` is a fixed tuple of
small integers identifying the purpose (documented at each call site).
Replicate k of any Monte Carlo loop uses ``child_rng(seed, tag, k)``, so a
single replicate can be reproduced in isolation.
"""

from __future__ import annotations

import numpy as np

# Stream tags, kept in one place so no two purposes collide.
SIM = 1
INTERVENTION = 2
BOOTSTRAP = 3
TRUTH = 4
DECOMPOSITION = 5
EXPERIMENT = 6
HBAR_MODEL = 7


def child_rng(seed: int, *path: int) -> np.random.Generator:
    """Generator for the stream identified by (seed, *path)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path)))
