"""Load vectors, their normalized views and the gap metric."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .rng import RngStream, substream

__all__ = [
    "LoadState",
    "NormalizedView",
    "RngStream",
    "substream",
    "allocate",
    "gap",
    "normalized",
]


class LoadState:
    """Integer bin loads after ``t`` allocations.

    ``max_load`` is maintained incrementally (loads never decrease);
    ``min_load`` is recomputed lazily when the minimum bin may have moved.
    """

    __slots__ = ("n", "t", "x", "max_load", "_min_load", "_min_stale")

    def __init__(self, n: int):
        if n < 1:
            raise ContractViolation(f"bin count must be positive, got n={n}")
        self.n = int(n)
        self.t = 0
        self.x = np.zeros(self.n, dtype=np.int64)
        self.max_load = 0
        self._min_load = 0
        self._min_stale = False

    @classmethod
    def from_loads(cls, loads) -> "LoadState":
        """Test/oracle constructor: arbitrary loads, ``t := sum(x)``."""
        x = np.asarray(loads, dtype=np.int64).copy()
        if x.ndim != 1 or x.size == 0:
            raise ContractViolation("loads must be a non-empty 1-d vector")
        if (x < 0).any():
            raise ContractViolation("loads must be non-negative")
        state = cls(x.size)
        state.x = x
        state.t = int(x.sum())
        state.max_load = int(x.max())
        state._min_load = int(x.min())
        return state

    @property
    def min_load(self) -> int:
        if self._min_stale:
            self._min_load = int(self.x.min())
            self._min_stale = False
        return self._min_load

    def copy(self) -> "LoadState":
        other = LoadState.from_loads(self.x)
        other.t = self.t
        return other

    def __repr__(self) -> str:
        return f"LoadState(n={self.n}, t={self.t}, max={self.max_load})"


def allocate(state: LoadState, bin: int) -> LoadState:
    """Place one ball into ``bin`` (in place); returns the same state."""
    if not 0 <= bin < state.n:
        raise ContractViolation(f"bin index {bin} out of range for n={state.n}")
    v = int(state.x[bin]) + 1
    state.x[bin] = v
    state.t += 1
    if v > state.max_load:
        state.max_load = v
    if v - 1 == state._min_load:
        state._min_stale = True
    return state


def gap(state: LoadState) -> float:
    return state.max_load - state.t / state.n


@dataclass(frozen=True)
class NormalizedView:
    """Loads sorted non-increasingly (ties by bin index) and shifted by t/n.

    ``order[r]`` is the bin holding rank ``r`` (rank 0 = most loaded);
    ``loads`` are the sorted integer loads, kept so that oracles can work in
    exact arithmetic.
    """

    y: np.ndarray
    order: np.ndarray
    loads: np.ndarray
    t: int
    overloaded_count: int
    underloaded_count: int

    @property
    def n(self) -> int:
        return int(self.y.size)


def normalized(state: LoadState) -> NormalizedView:
    order = np.argsort(-state.x, kind="stable")
    loads = state.x[order]
    y = loads - state.t / state.n
    # Overloaded iff n*x_i >= t, decided in integers.
    over = int(np.count_nonzero(loads * state.n >= state.t))
    return NormalizedView(
        y=y,
        order=order,
        loads=loads,
        t=state.t,
        overloaded_count=over,
        underloaded_count=state.n - over,
    )
