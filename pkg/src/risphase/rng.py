"""Counter-based random substreams.

Every random draw in the package is taken from a generator keyed by
``(seed, *key)`` so that any sample can be regenerated in isolation and in
any order.
"""

import numpy as np

SPLIT_TAGS = {"train": 0, "test": 1, "eval": 2, "misc": 3}


def substream(seed: int, *key: int) -> np.random.Generator:
    """Return a generator for the stream identified by ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))
