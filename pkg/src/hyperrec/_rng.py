"""Counter-based SplitMix64 streams usable from numba kernels.

Every walk and every training shard derives its own stream from
``(seed, a, b)``, so results do not depend on execution order.
"""

import numba as nb
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@nb.njit(inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(inline="always")
def derive(seed, a, b):
    s = mix64(np.uint64(seed) + _GOLDEN * np.uint64(a + 1))
    return mix64(s + _GOLDEN * np.uint64(b + 1))


@nb.njit(inline="always")
def next_u64(state):
    state[0] += _GOLDEN
    return mix64(state[0])


@nb.njit(inline="always")
def uniform(state):
    """Float in [0, 1) with 53 random bits."""
    return float(next_u64(state) >> _S11) * _INV53


@nb.njit(inline="always")
def randbelow(state, n):
    i = np.int64(uniform(state) * n)
    return i if i < n else n - 1


class SplitMix64:
    """Python handle on a one-word stream shared with the numba kernels."""

    def __init__(self, seed: int, a: int = 0, b: int = 0):
        self.state = np.array([derive(np.uint64(seed & 0xFFFFFFFFFFFFFFFF), a, b)], dtype=np.uint64)

    def random(self) -> float:
        return uniform(self.state)
