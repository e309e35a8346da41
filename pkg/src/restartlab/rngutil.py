"""Seed derivation for reproducible, order-independent parallel runs.

Every stochastic component takes a 64-bit seed.  Child seeds are derived
with :class:`numpy.random.SeedSequence` spawn keys, so run ``j`` of a batch
gets the same stream no matter how the batch is scheduled or how many
workers execute it.
"""

from __future__ import annotations

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF


def substream_seed(master_seed: int, index: int) -> int:
    """Derive the 64-bit seed of substream ``index`` of ``master_seed``."""
    if index < 0:
        raise ValueError("substream index must be non-negative")
    seq = np.random.SeedSequence(entropy=master_seed & MASK64, spawn_key=(index,))
    return int(seq.generate_state(1, np.uint64)[0])


def make_generator(seed: int) -> np.random.Generator:
    """A numpy Generator seeded deterministically from a 64-bit seed."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed & MASK64))
