"""Counter-free splittable randomness shared by the reference path and the kernels.

Every stream is a xoshiro256** generator whose 256-bit state is derived from
``numpy.random.SeedSequence(master_seed, spawn_key=(stream_index,))``.  The
draw primitives below are numba functions operating on the raw ``uint64[4]``
state, so the Python reference simulator and the compiled kernels consume
exactly the same numbers in the same order.

Derived draws:

* ``uniform``  -- top 53 bits scaled to [0, 1).
* ``index(n)`` -- ``floor(uniform * n)``; bias is at most n / 2**53.
* ``normal``   -- Box-Muller, one normal per two uniforms (second discarded).
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit, int64, uint64

_INV_2_53 = 1.0 / 9007199254740992.0


@njit(inline="always")
def _rotl(x, k):
    return (x << uint64(k)) | (x >> uint64(64 - k))


@njit(inline="always")
def next_u64(s):
    result = _rotl(s[1] * uint64(5), 7) * uint64(9)
    t = s[1] << uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@njit(inline="always")
def uniform(s):
    return (next_u64(s) >> uint64(11)) * _INV_2_53


@njit(inline="always")
def index(s, n):
    return int64(uniform(s) * n)


@njit(inline="always")
def normal(s):
    u1 = uniform(s)
    u2 = uniform(s)
    return math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(2.0 * math.pi * u2)


# Non-inlined entry points for calls from Python.
@njit(cache=True)
def _py_next_u64(s):
    return next_u64(s)


@njit(cache=True)
def _py_uniform(s):
    return uniform(s)


@njit(cache=True)
def _py_index(s, n):
    return index(s, n)


@njit(cache=True)
def _py_normal(s):
    return normal(s)


def seed_state(master_seed: int, stream_index: int) -> np.ndarray:
    if master_seed < 0 or stream_index < 0:
        raise ValueError("seeds and stream indices are unsigned")
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(stream_index),))
    state = seq.generate_state(4, np.uint64)
    if not state.any():  # pragma: no cover - probability 2**-256
        state[0] = np.uint64(1)
    return state


class RngStream:
    """One independent random stream ``substream(master_seed, stream_index)``."""

    __slots__ = ("master_seed", "stream_index", "state")

    def __init__(self, master_seed: int, stream_index: int = 0):
        self.master_seed = int(master_seed)
        self.stream_index = int(stream_index)
        self.state = seed_state(self.master_seed, self.stream_index)

    def __repr__(self) -> str:
        return f"RngStream(master_seed={self.master_seed}, stream_index={self.stream_index})"

    def next_u64(self) -> int:
        return int(_py_next_u64(self.state))

    def uniform(self) -> float:
        return float(_py_uniform(self.state))

    def index(self, n: int) -> int:
        return int(_py_index(self.state, n))

    def normal(self) -> float:
        return float(_py_normal(self.state))

    def coin(self) -> bool:
        """True with probability 1/2; consumes one uniform."""
        return self.uniform() < 0.5

    def copy(self) -> "RngStream":
        other = object.__new__(RngStream)
        other.master_seed = self.master_seed
        other.stream_index = self.stream_index
        other.state = self.state.copy()
        return other


def substream(master_seed: int, i: int) -> RngStream:
    return RngStream(master_seed, i)
