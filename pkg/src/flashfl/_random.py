"""Counter-keyed random streams derived from a single top-level seed."""
from __future__ import annotations

import zlib

import numpy as np


def _purpose_key(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def derive_rng(seed: int, purpose: str, *keys: int) -> np.random.Generator:
    """Return a generator keyed by ``(seed, purpose, *keys)``.

    Streams for different keys are statistically independent and do not
    depend on the order in which they are requested, so fan-out across
    clients never perturbs results.
    """
    spawn_key = (_purpose_key(purpose),) + tuple(int(k) for k in keys)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=spawn_key))


def as_generator(random_state) -> np.random.Generator:
    if isinstance(random_state, np.random.Generator):
        return random_state
    return np.random.default_rng(random_state)
