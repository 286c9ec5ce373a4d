"""Counter-based seed derivation.

Every random stream in a run is derived from one top-level seed plus a tuple
of integer keys, so streams never collide and any number can be reproduced.
"""

import numpy as np


def derive_seed(base: int, *keys: int) -> int:
    """Return a 63-bit seed that depends only on ``base`` and ``keys``."""
    ss = np.random.SeedSequence([int(base) & 0xFFFFFFFFFFFFFFFF, *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0]) >> 1


def rng_for(base: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(base, *keys))
