"""Counter-based random draws.

Every uniform is a pure function of ``(seed, stream coordinates, counter)``, so
a stream can be materialized on demand, in any order, without touching any
other stream. The mixer is splitmix64.
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_STREAM_SALT = np.uint64(0x5851F42D4C957F2D)
_REP_SALT = np.uint64(0x2545F4914F6CDD1D)
_TWO_M53 = 1.0 / 9007199254740992.0

MASK64 = (1 << 64) - 1


@njit(cache=True)
def splitmix64(x):
    z = x + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def stream_key(seed, site, code, layer):
    """64-bit key of one unit-rate layer of one Poisson stream."""
    s = np.int64(site)
    zigzag = np.uint64((s << 1) ^ (s >> 63))
    h = splitmix64(seed ^ _STREAM_SALT)
    h = splitmix64(h ^ zigzag)
    return splitmix64(h ^ np.uint64(code * 1024 + layer))


@njit(cache=True)
def uniform_open(key, counter, salt):
    """Uniform on the open interval (0, 1) for draw ``counter`` of ``key``."""
    h = splitmix64(key ^ splitmix64(np.uint64(counter * 2 + salt)))
    return (np.float64(h >> np.uint64(11)) + 0.5) * _TWO_M53


@njit(cache=True)
def _child_seed(master, index):
    return splitmix64(splitmix64(master ^ _REP_SALT) ^ np.uint64(index))


def as_seed(seed):
    """Normalize any Python integer to an unsigned 64-bit seed."""
    return np.uint64(int(seed) & MASK64)


def child_seed(master_seed, index):
    """Seed of replication ``index`` under ``master_seed``.

    Depends only on the two arguments, never on worker layout.
    """
    if index < 0:
        raise ValueError("replication index must be nonnegative")
    return int(_child_seed(as_seed(master_seed), np.uint64(index)))
