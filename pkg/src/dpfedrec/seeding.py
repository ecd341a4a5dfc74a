"""Hierarchical seed derivation: master -> client -> round -> purpose.

Streams are keyed by position rather than drawn in sequence, so adding a
client or a round never shifts the randomness any other consumer sees.
"""

from __future__ import annotations

import numpy as np

PURPOSES = {
    "init": 0,
    "split": 1,
    "train": 2,
    "share": 3,
    "psi": 4,
    "local-noise": 5,
}

SERVER = 2**31 - 1  # pseudo client id for server-side streams


def seed_sequence(master_seed: int, client: int, round_: int, purpose: str, *extra: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(client, round_, PURPOSES[purpose], *extra))


def rng_for(master_seed: int, client: int, round_: int, purpose: str, *extra: int) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(master_seed, client, round_, purpose, *extra))


def int_seed(master_seed: int, client: int, round_: int, purpose: str, *extra: int) -> int:
    """A 63-bit integer seed for consumers that do not take a Generator."""
    state = seed_sequence(master_seed, client, round_, purpose, *extra).generate_state(2, np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])
