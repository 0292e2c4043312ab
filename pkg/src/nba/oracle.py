"""Exact one-step computations: allocation vectors, expected potential changes,
event predicates and exhaustive enumeration of short runs.

Vectors here are indexed by load rank (rank 0 = most loaded bin, ties by bin
index), matching :func:`nba.core.normalized`; ``order`` maps ranks back to
bins.  Randomized decisions enter as fractional mass, never by sampling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import numpy as np

from . import potentials as pot
from . import processes as P
from .core import LoadState, NormalizedView, allocate, normalized
from .errors import ResourceError

__all__ = [
    "AllocationVector",
    "PairSet",
    "two_choice_vector",
    "allocation_vector",
    "vector_from_pairs",
    "adv_comp_pairs",
    "manipulable_pairs",
    "expected_change",
    "expected_change_exact",
    "quadratic_identity_exact",
    "k_event_holds",
    "GammaCheck",
    "check_gamma_bound",
    "ExactDistribution",
    "enumerate_exact",
    "majorizes",
    "stochastically_dominates",
    "total_variation",
    "verify_drop_inequalities",
]

DEFAULT_MAX_N = 256
ENUMERATION_LIMIT = 10**7


@dataclass(frozen=True)
class AllocationVector:
    """Per-rank allocation probabilities ``q`` with the rank-to-bin map ``order``."""

    q: np.ndarray
    order: np.ndarray

    @property
    def n(self) -> int:
        return int(self.q.size)

    def by_bin(self) -> np.ndarray:
        out = np.empty_like(self.q)
        out[self.order] = self.q
        return out


@dataclass(frozen=True)
class PairSet:
    """Ordered rank pairs ``(i, j)``, 0-based."""

    pairs: frozenset

    def __contains__(self, item) -> bool:
        return tuple(item) in self.pairs

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(sorted(self.pairs))

    def one_based(self) -> set:
        return {(i + 1, j + 1) for i, j in self.pairs}


def two_choice_vector(n: int) -> AllocationVector:
    i = np.arange(1, n + 1, dtype=float)
    return AllocationVector((2 * i - 1) / (n * n), np.arange(n))


def vector_from_pairs(p: np.ndarray, state: LoadState) -> AllocationVector:
    """Collapse a pair matrix ``p[i1, i2] = P[i1 wins]`` into a rank vector."""
    n = state.n
    bin_q = (p.sum(axis=1) + (1.0 - p).sum(axis=0)) / (n * n)
    order = np.argsort(-state.x, kind="stable")
    return AllocationVector(bin_q[order], order)


def allocation_vector(spec: P.ProcessSpec, state: LoadState, aux=None,
                      max_n: int = DEFAULT_MAX_N) -> AllocationVector:
    """Exact distribution of the next ball's rank under ``spec`` at ``state``.

    ``aux`` is the process's auxiliary state (snapshot or delay window); a
    fresh one is used when omitted, which makes stale processes see the
    current loads.
    """
    if state.n > max_n:
        raise ResourceError(f"oracle bound is n <= {max_n}, got n={state.n}; use Monte Carlo instead")
    if aux is None:
        aux = spec.make_aux(state)
    elif hasattr(aux, "sync"):
        aux = aux.clone()
        aux.sync(state)
    return vector_from_pairs(spec.pair_probabilities(state, aux, state.t + 1), state)


def adv_comp_pairs(x: np.ndarray, g: int, inside: np.ndarray) -> np.ndarray:
    """Pair matrix of a g-Adv-Comp instance whose adversary picks ``i1`` with
    probability ``inside[i1, i2]`` on pairs at distance at most g."""
    x = np.asarray(x, dtype=np.int64)
    delta = np.abs(x[:, None] - x[None, :])
    lighter_first = np.where(x[:, None] == x[None, :], 0.5, (x[:, None] < x[None, :]).astype(float))
    return np.where(delta <= g, inside, lighter_first)


def manipulable_pairs(state: LoadState | NormalizedView, g: int) -> PairSet:
    """Rank pairs ``(i, j)`` with ``0 < y_i - y_j <= g``."""
    view = state if isinstance(state, NormalizedView) else normalized(state)
    loads = view.loads
    d = loads[:, None] - loads[None, :]
    i, j = np.nonzero((d > 0) & (d <= g))
    return PairSet(frozenset(zip(i.tolist(), j.tolist())))


# ---------------------------------------------------------------------------
# expected potential changes


def _exact_q(q) -> list[Fraction]:
    # Floats are read as the exact rationals they represent.
    vals = q.q if isinstance(q, AllocationVector) else q
    return [v if isinstance(v, Fraction) else Fraction(float(v)) for v in vals]


def _exact_y(view: NormalizedView) -> list[Fraction]:
    return [Fraction(int(v) * view.n - view.t, view.n) for v in view.loads]


def expected_change_exact(potential: pot.PotentialSpec, q: AllocationVector | Iterable,
                          view: NormalizedView) -> Fraction:
    """Exact E[change] for Quadratic and AbsoluteValue, with ``q`` read as exact rationals."""
    qs = _exact_q(q)
    n = view.n
    ys = _exact_y(view)
    shift = Fraction(1, n)
    if isinstance(potential, pot.Quadratic):
        f = lambda v: v * v  # noqa: E731
    elif isinstance(potential, pot.AbsoluteValue):
        f = abs
    else:
        raise TypeError(f"exact evaluation covers quadratic and absolute potentials, not {potential.name}")
    # Every bin loses 1/n; the chosen bin additionally gains 1.
    base = sum(f(y - shift) - f(y) for y in ys)
    gain = sum(qi * (f(y + 1 - shift) - f(y - shift)) for qi, y in zip(qs, ys))
    return base + gain


def quadratic_identity_exact(q: AllocationVector | Iterable, view: NormalizedView) -> Fraction:
    """``sum 2 q_i y_i + 1 - 1/n`` in exact arithmetic."""
    qs = _exact_q(q)
    ys = _exact_y(view)
    n = view.n
    return sum(2 * qi * y for qi, y in zip(qs, ys)) + 1 - Fraction(1, n)


def _diff_terms(potential: pot.PotentialSpec, y: np.ndarray, s: float) -> np.ndarray:
    """Per-bin ``term(y + s) - term(y)``, cancellation-free for exponentials."""
    if isinstance(potential, pot.Quadratic):
        return (2.0 * y + s) * s
    if isinstance(potential, pot.AbsoluteValue):
        return np.abs(y + s) - np.abs(y)
    out = np.zeros_like(y)
    for before, after in zip(potential.parts(y), potential.parts(y + s)):
        out += pot._checked_exp(before) * np.expm1(after - before)
    return out


def expected_change(potential: pot.PotentialSpec, q: AllocationVector | np.ndarray,
                    view: NormalizedView) -> float:
    """``sum_i q_i [Phi(y after a ball in rank i) - Phi(y)]``.

    Quadratic and absolute potentials are computed exactly and rounded once;
    exponential potentials in floating point through ``expm1`` differences.
    """
    qv = q.q if isinstance(q, AllocationVector) else np.asarray(q, dtype=float)
    if qv.size != view.n:
        raise ValueError("q and view cover different numbers of bins")
    if not potential.exponential:
        return float(expected_change_exact(potential, qv, view))
    y = view.y
    shift = 1.0 / view.n
    base = _diff_terms(potential, y, -shift).sum()
    y_down = y - shift
    gain = float(np.dot(qv, _diff_terms(potential, y_down, 1.0)))
    return float(base + gain)


def k_event_holds(q: AllocationVector | np.ndarray, view: NormalizedView, phi: float, z: float) -> bool:
    """Every rank with ``y >= z - 1`` receives probability at most ``exp(-phi)/n``."""
    qv = q.q if isinstance(q, AllocationVector) else np.asarray(q, dtype=float)
    heavy = view.y >= z - 1
    return bool(np.all(qv[heavy] <= math.exp(-phi) / view.n))


@dataclass(frozen=True)
class GammaCheck:
    exact: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.exact <= self.bound + 1e-12 * max(1.0, abs(self.bound))

    @property
    def margin(self) -> float:
        return self.bound - self.exact


def check_gamma_bound(q: AllocationVector | np.ndarray, view: NormalizedView, gamma: float) -> GammaCheck:
    """Exact E[change of Gamma] next to the bound ``h(y) + sum q_i f(y_i)``."""
    qv = q.q if isinstance(q, AllocationVector) else np.asarray(q, dtype=float)
    n = view.n
    y = view.y
    exact = expected_change(pot.Gamma(gamma), qv, view)
    up = pot._checked_exp(gamma * y)
    down = pot._checked_exp(-gamma * y)
    h = float(np.sum(-(gamma / n - gamma**2 / n**2) * up + (gamma / n + gamma**2 / n**2) * down))
    f = (gamma + gamma**2) * up + (-gamma + gamma**2) * down
    return GammaCheck(exact, h + float(np.dot(qv, f)))


# ---------------------------------------------------------------------------
# enumeration


@dataclass(frozen=True)
class ExactDistribution:
    """Exact gap distribution after ``m`` balls and expected potentials per step."""

    pmf: dict
    expected_potentials: dict
    states: int

    def mean(self) -> float:
        return float(sum(float(k) * v for k, v in self.pmf.items()))


def enumerate_exact(spec: P.ProcessSpec, n: int, m: int,
                    potentials: Iterable[pot.PotentialSpec] = (),
                    limit: int = ENUMERATION_LIMIT) -> ExactDistribution:
    """Expand every allocation sequence of ``m`` balls into ``n`` bins.

    Each step branches on the receiving bin with its exact probability, so
    the size guard is ``n**m <= limit``.  States with equal loads and
    auxiliary state are merged.  Gap keys are exact fractions.
    """
    if n ** m > limit:
        raise ResourceError(
            f"enumeration of n={n}, m={m} needs {n}**{m} > {limit} branches; use Monte Carlo instead"
        )
    potentials = list(potentials)
    start = LoadState(n)
    frontier = {(): (1.0, start, spec.make_aux(start))}
    trajectories: dict[str, list[float]] = {p.name: [] for p in potentials}

    def record(front):
        for p in potentials:
            trajectories[p.name].append(
                sum(w * pot.evaluate(p, normalized(s)) for w, s, _ in front.values())
            )

    record(frontier)
    for _ in range(m):
        nxt: dict = {}
        for weight, state, aux in frontier.values():
            vec = allocation_vector(spec, state, aux).by_bin()
            for b in np.nonzero(vec > 0)[0]:
                s2 = state.copy()
                a2 = aux.clone() if hasattr(aux, "clone") else aux
                if hasattr(a2, "sync"):
                    a2.sync(s2)
                allocate(s2, int(b))
                if hasattr(a2, "record"):
                    a2.record(int(b), s2)
                key = (tuple(s2.x.tolist()), a2.key() if hasattr(a2, "key") else None)
                w = weight * float(vec[b])
                if key in nxt:
                    nxt[key] = (nxt[key][0] + w, s2, a2)
                else:
                    nxt[key] = (w, s2, a2)
        frontier = nxt
        record(frontier)
    pmf: dict[Fraction, float] = {}
    for w, s, _ in frontier.values():
        g = Fraction(int(s.x.max()) * n - s.t, n)
        pmf[g] = pmf.get(g, 0.0) + w
    return ExactDistribution(dict(sorted(pmf.items())), trajectories, len(frontier))


def majorizes(a, b, tol: float = 1e-12) -> bool:
    """Prefix sums of sorted ``a`` dominate those of sorted ``b`` (equal totals)."""
    sa = np.cumsum(np.sort(np.asarray(a, dtype=float))[::-1])
    sb = np.cumsum(np.sort(np.asarray(b, dtype=float))[::-1])
    return bool(abs(sa[-1] - sb[-1]) <= tol and np.all(sa >= sb - tol))


def stochastically_dominates(pmf_a: dict, pmf_b: dict, tol: float = 1e-12) -> bool:
    """``P_a[X >= v] >= P_b[X >= v]`` for every threshold ``v``."""
    support = sorted(set(pmf_a) | set(pmf_b))
    for v in support:
        tail_a = sum(p for k, p in pmf_a.items() if k >= v)
        tail_b = sum(p for k, p in pmf_b.items() if k >= v)
        if tail_a < tail_b - tol:
            return False
    return True


def total_variation(pmf_a: dict, pmf_b: dict) -> float:
    keys = set(pmf_a) | set(pmf_b)
    return 0.5 * sum(abs(pmf_a.get(k, 0.0) - pmf_b.get(k, 0.0)) for k in keys)


def verify_drop_inequalities(suite: str, trials: int, seed: int = 0, **kwargs):
    """Run one verification suite; see :mod:`nba.verify`."""
    from .verify import run_suite

    return run_suite(suite, trials, seed, **kwargs)
