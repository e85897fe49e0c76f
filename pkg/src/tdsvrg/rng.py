"""Counter-based random streams keyed by (seed, epoch, purpose).

Each stream is an independent Philox generator whose key is derived from the
run seed and a spawn key, so inner-loop sampling, estimation batches and the
snapshot index can be replayed independently of each other.
"""

import enum

import numpy as np


class Purpose(enum.IntEnum):
    INNER = 0
    ESTIMATE = 1
    SNAPSHOT = 2
    TRAJECTORY = 3
    START = 4
    GENERATE = 5


def stream(seed, epoch=0, purpose=Purpose.INNER):
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(epoch), int(purpose)))
    return np.random.Generator(np.random.Philox(ss))


def derive_seeds(master_seed, n):
    """Deterministic per-run seeds from a master seed."""
    children = np.random.SeedSequence(int(master_seed)).spawn(int(n))
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in children]
