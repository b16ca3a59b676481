"""Counter-based random substreams.

Every random draw in the package comes from a Philox generator keyed by a
master seed plus a tuple of integer indices (cell, replicate, ...).  Work
items therefore produce identical draws regardless of execution order or
worker count.
"""

import numpy as np


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))
