"""Splittable, counter-based random streams.

All randomness in the package flows from ``numpy.random.Philox`` generators
keyed by a ``SeedSequence``. A stream is addressed by
``(master_seed, experiment_id, index)``; the same address always yields the
same stream regardless of how many workers are used or in which order the
streams are requested.
"""

from __future__ import annotations

import hashlib

import numpy as np

SeedLike = "int | np.random.SeedSequence | np.random.Generator"


def experiment_key(experiment_id) -> int:
    """Map an experiment identifier (str or int) to a stable 32-bit key."""
    if isinstance(experiment_id, (int, np.integer)):
        return int(experiment_id) & 0xFFFFFFFF
    digest = hashlib.blake2b(str(experiment_id).encode(), digest_size=4).digest()
    return int.from_bytes(digest, "little")


def seed_sequence(master_seed, experiment_id=0, *index) -> np.random.SeedSequence:
    return np.random.SeedSequence(
        entropy=int(master_seed), spawn_key=(experiment_key(experiment_id), *map(int, index))
    )


def generator(seed) -> np.random.Generator:
    """Philox generator from an int, a SeedSequence, or pass a Generator through."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(seed))


def split(master_seed, experiment_id, index) -> np.random.Generator:
    """Stream ``index`` of experiment ``experiment_id`` under ``master_seed``."""
    return generator(seed_sequence(master_seed, experiment_id, index))


def as_seed_sequence(seed) -> np.random.SeedSequence:
    """Coerce a seed-like value into a SeedSequence.

    A Generator is turned into a fresh SeedSequence by drawing entropy from it,
    which advances the generator.
    """
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        return np.random.SeedSequence(seed.integers(0, 2**63, size=4, dtype=np.uint64).tolist())
    return np.random.SeedSequence(int(seed))
