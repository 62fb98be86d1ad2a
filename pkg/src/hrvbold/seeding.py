"""Deterministic random number generation.

Every stochastic routine in the package draws from a counter-based Philox
generator keyed by explicit integers. There is no global RNG state: the
same key tuple yields the same stream on every platform, which is what
makes scan simulation, fold shuffling, and training reproducible
byte-for-byte.
"""

from __future__ import annotations

import numpy as np


def make_rng(*key: int) -> np.random.Generator:
    """Return a Philox generator keyed by one or more integers.

    Sub-streams are derived by appending integers to the key, e.g.
    ``make_rng(seed, 3)`` is independent of ``make_rng(seed, 4)``.
    """
    if not key:
        raise ValueError("at least one key integer is required")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))
