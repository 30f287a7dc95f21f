"""Seed derivation.

Every random consumer gets its own stream derived from the root seed and a
key tuple, so results never depend on scheduling or thread count.  The
operator and noise sequences always live on disjoint child streams.
"""

import numpy as np

_MASK = (1 << 64) - 1


def seed_sequence(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(seed) & _MASK, spawn_key=tuple(int(k) for k in key))


def generator(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *key)))


def split_streams(seed: int, *key: int):
    """Independent ``(rho_rng, eps_rng)`` generators for one replication block."""
    rho_ss, eps_ss = seed_sequence(seed, *key).spawn(2)
    return np.random.Generator(np.random.PCG64(rho_ss)), np.random.Generator(np.random.PCG64(eps_ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
