"""Seed derivation.

Every stochastic routine owns a private stream derived from
``(master_seed, stream_tag, replica, ...)`` through ``numpy.random.SeedSequence``,
so replicas are independent and any run is reproducible from its provenance
tuple alone.  The event kernels use xoshiro256++ states (4 x uint64) drawn
from the same sequence.
"""

from __future__ import annotations

import numpy as np

# stream tags: keep stable, they are part of the reproducibility contract
TAG_ENGINE = 1
TAG_EVENT_LOG = 2
TAG_BD = 3
TAG_ANALYSIS = 4
TAG_DUALITY = 5


def seed_sequence(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=[int(seed), *[int(k) for k in key]])


def generator(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(seed, *key))


def xoshiro_state(seed: int, *key: int) -> np.ndarray:
    """One xoshiro256++ state vector (uint64[4], never all zero)."""
    state = seed_sequence(seed, *key).generate_state(4, dtype=np.uint64)
    if not state.any():
        state[0] = np.uint64(1)
    return state


def xoshiro_states(seed: int, count: int, *key: int) -> np.ndarray:
    """Independent xoshiro256++ states as a (count, 4) uint64 array."""
    states = seed_sequence(seed, *key).generate_state(4 * count, dtype=np.uint64).reshape(count, 4)
    dead = ~states.any(axis=1)
    states[dead, 0] = np.uint64(1)
    return states
