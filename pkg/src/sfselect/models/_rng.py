"""Counter-based seed streams (splitmix64 finalizer).

``derive_seed(seed, a, b)`` is a pure function of its keys, so a run or tree
gets the same randomness no matter which order or thread it executes in.
"""

from __future__ import annotations

import numba
import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(*keys: int) -> int:
    """Fold integer keys into one 64-bit seed."""
    h = 0
    for k in keys:
        h = splitmix64(h ^ (int(k) & MASK64))
    return h


def philox(*keys: int) -> np.random.Generator:
    """Numpy Philox generator keyed by ``derive_seed(*keys)``."""
    return np.random.Generator(np.random.Philox(key=derive_seed(*keys)))


@numba.njit(cache=True, nogil=True)
def mix64(x):
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))
