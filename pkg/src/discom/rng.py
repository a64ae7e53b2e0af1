"""Seeded random streams.

Every stream is derived from the master seed and a fixed key
``(ca, purpose)`` through :class:`numpy.random.SeedSequence`'s spawn key, so
streams are independent of each other and of the order they are created in.
Adding a CA never changes the draws of existing CAs.
"""

from __future__ import annotations

import enum
import random

import numpy as np


class Purpose(enum.IntEnum):
    CONTEXT = 0
    FEEDBACK = 1
    OBSERVE = 2
    POLICY = 3
    USER_TYPE = 4
    ENV = 5


def seed_sequence(master_seed: int, ca: int, purpose: Purpose) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(ca), int(purpose)))


def numpy_stream(master_seed: int, ca: int, purpose: Purpose) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(master_seed, ca, purpose))


def policy_stream(master_seed: int, ca: int) -> random.Random:
    """Fast scalar stream for a learner's uniform picks and tie-breaks."""
    state = seed_sequence(master_seed, ca, Purpose.POLICY).generate_state(2, dtype=np.uint64)
    return random.Random(int(state[0]) << 64 | int(state[1]))
