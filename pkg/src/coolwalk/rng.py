"""Counter-based random streams (Philox4x32-10).

Every replica gets its own stream keyed by the master seed, with the
replica index held in the upper half of the 128-bit counter.  Draw ``i``
of stream ``(seed, index)`` is therefore a pure function of
``(seed, index, i)``: no two streams share a counter value, and results
do not depend on how replicas are scheduled over threads.

The numba helpers operate on a small ``uint64`` state vector so that the
same generator is usable from jitted kernels and from Python.
"""

import numpy as np
from numba import njit

PHILOX_M0 = np.uint64(0xD2511F53)
PHILOX_M1 = np.uint64(0xCD9E8D57)
PHILOX_W0 = np.uint64(0x9E3779B9)
PHILOX_W1 = np.uint64(0xBB67AE85)
MASK32 = np.uint64(0xFFFFFFFF)

# state layout: key0, key1, index_lo, index_hi, block counter, buffer position, 4 buffered words
STATE_SIZE = 10
_KEY0, _KEY1, _IDX0, _IDX1, _BLOCK, _POS, _BUF = 0, 1, 2, 3, 4, 5, 6

# tags carve the 64-bit replica index space into independent families
TAG_SHIFT = 48


@njit(cache=True, inline="always")
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten Philox rounds on one counter block; all arguments are uint64 holding 32-bit words."""
    for _ in range(10):
        p0 = c0 * PHILOX_M0
        p1 = c2 * PHILOX_M1
        hi0 = p0 >> np.uint64(32)
        lo0 = p0 & MASK32
        hi1 = p1 >> np.uint64(32)
        lo1 = p1 & MASK32
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        k0 = (k0 + PHILOX_W0) & MASK32
        k1 = (k1 + PHILOX_W1) & MASK32
    return c0, c1, c2, c3


@njit(cache=True)
def init_state(state, seed, index):
    state[_KEY0] = seed & MASK32
    state[_KEY1] = seed >> np.uint64(32)
    state[_IDX0] = index & MASK32
    state[_IDX1] = index >> np.uint64(32)
    state[_BLOCK] = np.uint64(0)
    state[_POS] = np.uint64(4)


@njit(cache=True, inline="always")
def _refill(state):
    blk = state[_BLOCK]
    r0, r1, r2, r3 = philox4x32(
        blk & MASK32, blk >> np.uint64(32), state[_IDX0], state[_IDX1], state[_KEY0], state[_KEY1]
    )
    state[_BUF] = r0
    state[_BUF + 1] = r1
    state[_BUF + 2] = r2
    state[_BUF + 3] = r3
    state[_BLOCK] = blk + np.uint64(1)
    state[_POS] = np.uint64(0)


@njit(cache=True, inline="always")
def next_u32(state):
    # keep every comparison in uint64: mixing with int64 literals promotes to float
    if state[_POS] >= np.uint64(4):
        _refill(state)
    i = state[_POS]
    state[_POS] = i + np.uint64(1)
    return state[np.int64(i) + _BUF]


@njit(cache=True, inline="always")
def next_double(state):
    """Uniform on the open interval (0, 1) with 53 random bits."""
    a = next_u32(state) >> np.uint64(5)
    b = next_u32(state) >> np.uint64(6)
    return ((a * np.uint64(67108864) + b) + 0.5) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def next_normal(state):
    # Marsaglia polar method; one variate per call keeps the stream layout simple
    while True:
        u = 2.0 * next_double(state) - 1.0
        v = 2.0 * next_double(state) - 1.0
        s = u * u + v * v
        if 0.0 < s < 1.0:
            return u * np.sqrt(-2.0 * np.log(s) / s)


@njit(cache=True)
def next_exponential(state):
    return -np.log(next_double(state))


@njit(cache=True)
def next_gamma(state, shape):
    """Gamma(shape, 1) by Marsaglia-Tsang, boosted for shape < 1."""
    if shape < 1.0:
        g = next_gamma(state, shape + 1.0)
        return g * next_double(state) ** (1.0 / shape)
    d = shape - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    while True:
        x = next_normal(state)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = next_double(state)
        if np.log(u) < 0.5 * x * x + d - d * v + d * np.log(v):
            return d * v


@njit(cache=True)
def next_beta(state, a, b):
    x = next_gamma(state, a)
    y = next_gamma(state, b)
    return x / (x + y)


def stream_index(replica, tag=0):
    """Pack a replica number and a purpose tag into one 64-bit stream index."""
    if not 0 <= replica < (1 << TAG_SHIFT):
        raise ValueError(f"replica index {replica} out of range")
    if not 0 <= tag < (1 << 16):
        raise ValueError(f"stream tag {tag} out of range")
    return (tag << TAG_SHIFT) | replica


class Stream:
    """Python handle on one Philox stream.

    Mostly used for tests and for small serial draws; the heavy kernels
    create their own state vectors from the same ``(seed, index)`` pair.
    """

    def __init__(self, seed, index):
        self.seed = int(seed)
        self.index = int(index)
        if not 0 <= self.seed < (1 << 64):
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        self.state = np.zeros(STATE_SIZE, dtype=np.uint64)
        init_state(self.state, np.uint64(self.seed), np.uint64(self.index))

    def u32(self, size=None):
        if size is None:
            return int(next_u32(self.state))
        return _fill_u32(self.state, size)

    def random(self, size=None):
        if size is None:
            return float(next_double(self.state))
        return _fill_double(self.state, size)

    def normal(self, size=None):
        if size is None:
            return float(next_normal(self.state))
        return _fill_normal(self.state, size)

    def __repr__(self):
        return f"Stream(seed={self.seed}, index={self.index})"


def derive_stream(master_seed, replica_index, tag=0):
    return Stream(master_seed, stream_index(replica_index, tag))


@njit(cache=True)
def _fill_u32(state, size):
    out = np.empty(size, dtype=np.uint64)
    for i in range(size):
        out[i] = next_u32(state)
    return out


@njit(cache=True)
def _fill_double(state, size):
    out = np.empty(size)
    for i in range(size):
        out[i] = next_double(state)
    return out


@njit(cache=True)
def _fill_normal(state, size):
    out = np.empty(size)
    for i in range(size):
        out[i] = next_normal(state)
    return out
