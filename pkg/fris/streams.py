"""Named counter-based random streams.

Every random draw in the package comes from a Philox generator keyed by the
experiment seed, a stream name and optional counters (iteration, candidate,
user ...). Two calls with the same key always see the same numbers, no matter
which thread makes them or in which order.
"""
from enum import IntEnum

import numpy as np


class Stream(IntEnum):
    """Documented random streams"""
    CHANNEL = 1
    CEO = 2
    PATTERN = 3
    REFLECTION = 4


def substream(seed: int, stream: Stream, *counters: int) -> np.random.Generator:
    """Generator for (seed, stream, *counters)"""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    key = (int(stream),) + tuple(int(c) for c in counters)
    sequence = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(sequence))
