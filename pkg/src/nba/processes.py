"""Allocation processes as one-step decision rules over sampled bins.

Every process samples bins uniformly with replacement (one for One-Choice,
two for everything else) and then decides which sampled bin receives the
ball.  Each spec offers two parallel views of the same rule:

* ``decide``  -- draws from an :class:`~nba.rng.RngStream` (simulation path);
* ``pair_probabilities`` -- the exact probability that the *first* sample
  wins, for every ordered pair (oracle path; randomized choices enter as
  fractional mass).

Draw protocol, shared with the compiled kernels: ``i1 = index(n)``,
``i2 = index(n)``, then at most one uniform for a randomized comparison
(a tie, or a correctness probability strictly between 0 and 1).  A tie
between equal loads goes to ``i1`` iff that uniform is below 1/2.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, ClassVar

import numpy as np

from .core import LoadState, allocate
from .errors import ConfigError, ContractViolation, ParameterError
from .rng import RngStream

__all__ = [
    "ProcessSpec",
    "OneChoice",
    "TwoChoice",
    "OnePlusBeta",
    "GBounded",
    "GMyopicComp",
    "NoisyComp",
    "SigmaNoisyLoad",
    "GAdvComp",
    "BBatch",
    "TauDelay",
    "AdversaryStrategy",
    "StalenessStrategy",
    "DelayWindow",
    "BatchSnapshot",
    "AdversaryLog",
    "ADVERSARIES",
    "STALENESS",
    "adversary",
    "staleness",
    "rho_sigma",
    "decide_noisy_comparison",
    "batch_snapshot_decide",
    "stale_estimate",
    "make_aux",
    "step",
    "advance",
    "simulate",
    "spec_from_dict",
]


# ---------------------------------------------------------------------------
# comparison primitives


def _compare(i1: int, i2: int, a: int, b: int, p_correct: float, rng: RngStream) -> int:
    if a == b:
        return i1 if rng.uniform() < 0.5 else i2
    lighter, heavier = (i1, i2) if a < b else (i2, i1)
    if p_correct >= 1.0:
        return lighter
    if p_correct <= 0.0:
        return heavier
    return lighter if rng.uniform() < p_correct else heavier


def _compare_matrix(e: np.ndarray, p_correct: np.ndarray) -> np.ndarray:
    """P[first wins] for all ordered pairs given effective loads ``e``.

    ``p_correct`` is an n-by-n matrix of the correctness probability for
    each pair's absolute difference.
    """
    a = e[:, None]
    b = e[None, :]
    return np.where(a == b, 0.5, np.where(a < b, p_correct, 1.0 - p_correct))


def rho_sigma(delta: float, sigma: float) -> float:
    """Gaussian-tail correctness probability ``1 - exp(-(delta/sigma)^2) / 2``."""
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    if delta < 0:
        raise ParameterError(f"delta must be non-negative, got {delta}")
    r = delta / sigma
    return 1.0 - 0.5 * math.exp(-(r * r))


def _gaussian_correct(delta, sigma: float):
    # P[N(0, 2 sigma^2) <= delta] = Phi(delta / (sqrt(2) sigma)).
    return 0.5 * (1.0 + np.vectorize(math.erf)(np.asarray(delta, dtype=float) / (2.0 * sigma)))


def decide_noisy_comparison(load1: int, load2: int, rho, rng: RngStream) -> int:
    """Winner (0 = first, 1 = second) of one comparison that is correct w.p. rho(|diff|)."""
    p = rho(abs(load1 - load2)) if callable(rho) else rho.rho(abs(load1 - load2))
    return 0 if _compare(0, 1, load1, load2, p, rng) == 0 else 1


def batch_snapshot_decide(snapshot, pair: tuple[int, int], rng: RngStream) -> int:
    """Lighter bin of ``pair`` by its snapshot load; snapshot ties are random."""
    i1, i2 = pair
    return _compare(i1, i2, int(snapshot[i1]), int(snapshot[i2]), 1.0, rng)


# ---------------------------------------------------------------------------
# auxiliary state


@dataclass
class AdversaryLog:
    """Records out-of-window choices made by an adversary (strict mode)."""

    violations: list = field(default_factory=list)


class BatchSnapshot:
    """Loads as of the most recent batch boundary (a multiple of ``b`` balls)."""

    def __init__(self, n: int, b: int):
        self.b = b
        self.snapshot = np.zeros(n, dtype=np.int64)
        self.taken_at = 0

    @property
    def n(self) -> int:
        return self.snapshot.size

    def sync(self, state: LoadState) -> None:
        if state.t % self.b == 0 and state.t != self.taken_at:
            self.snapshot[:] = state.x
            self.taken_at = state.t

    def record(self, bin: int, state: LoadState) -> None:
        pass

    def key(self):
        return (self.taken_at, self.snapshot.tobytes())

    def clone(self) -> "BatchSnapshot":
        other = BatchSnapshot(self.n, self.b)
        other.snapshot = self.snapshot.copy()
        other.taken_at = self.taken_at
        return other


class DelayWindow:
    """Allocation timestamps per bin over the current staleness window.

    Before the decision of step ``T + 1`` (``T`` balls placed so far) the
    window holds the allocations made in steps ``> T + 1 - tau``; the load
    ``tau`` steps back, ``x^(T+1-tau)``, is the current load minus the bin's
    in-window count.  At most ``tau - 1`` timestamps are stored in total.
    """

    def __init__(self, n: int, tau: int):
        if tau < 1:
            raise ParameterError(f"tau must be >= 1, got {tau}")
        self.tau = tau
        self.queues: list[deque] = [deque() for _ in range(n)]
        self.order: deque = deque()
        self.now = 0

    @property
    def n(self) -> int:
        return len(self.queues)

    def sync(self, state: LoadState) -> None:
        self.now = state.t
        horizon = state.t + 1 - self.tau
        while self.order and self.order[0][0] <= horizon:
            _, bin = self.order.popleft()
            self.queues[bin].popleft()

    def record(self, bin: int, state: LoadState) -> None:
        if self.tau > 1:
            self.order.append((state.t, bin))
            self.queues[bin].append(state.t)
        self.now = state.t

    def count(self, bin: int) -> int:
        return len(self.queues[bin])

    def count_since(self, bin: int, boundary: int) -> int:
        return sum(1 for s in self.queues[bin] if s > boundary)

    def batch_boundary(self) -> int:
        return (self.now // self.tau) * self.tau

    def total(self) -> int:
        return len(self.order)

    def key(self):
        return (self.now, tuple(self.order))

    def clone(self) -> "DelayWindow":
        other = DelayWindow(self.n, self.tau)
        other.queues = [deque(q) for q in self.queues]
        other.order = deque(self.order)
        other.now = self.now
        return other


def stale_estimate(window: DelayWindow, bin: int, current_load: int) -> int:
    """Load of ``bin`` at the far end of the window (the "oldest" estimate)."""
    return current_load - window.count(bin)


# ---------------------------------------------------------------------------
# adversary and staleness strategies


@dataclass(frozen=True)
class AdversaryStrategy:
    """Decision rule for comparisons the adversary controls.

    ``choose(t, (i1, i2), x, rng)`` returns ``i1`` or ``i2``; ``x`` is a
    read-only view of the current loads.  ``first_probability(t, pair, x)``
    is the probability of returning ``i1``; when omitted the oracle calls
    ``choose`` with ``rng=None`` and therefore requires a deterministic rule.
    """

    name: str
    choose: Callable[..., int]
    first_probability: Callable[..., float] | None = None

    def probability(self, t: int, pair: tuple[int, int], x: np.ndarray) -> float:
        if self.first_probability is not None:
            return float(self.first_probability(t, pair, x))
        return 1.0 if self.choose(t, pair, x, None) == pair[0] else 0.0


def _greedy_max(t, pair, x, rng):
    i1, i2 = pair
    if x[i1] == x[i2]:
        return i1 if rng.uniform() < 0.5 else i2
    return i1 if x[i1] > x[i2] else i2


def _greedy_max_p(t, pair, x):
    i1, i2 = pair
    return 0.5 if x[i1] == x[i2] else float(x[i1] > x[i2])


def _coin_flip(t, pair, x, rng):
    i1, i2 = pair
    return _compare(i1, i2, int(x[i1]), int(x[i2]), 0.5, rng)


def _coin_flip_p(t, pair, x):
    return 0.5


def _always_lighter(t, pair, x, rng):
    i1, i2 = pair
    return _compare(i1, i2, int(x[i1]), int(x[i2]), 1.0, rng)


def _always_lighter_p(t, pair, x):
    i1, i2 = pair
    return 0.5 if x[i1] == x[i2] else float(x[i1] < x[i2])


ADVERSARIES: dict[str, AdversaryStrategy] = {
    "greedy_max": AdversaryStrategy("greedy_max", _greedy_max, _greedy_max_p),
    "coin_flip": AdversaryStrategy("coin_flip", _coin_flip, _coin_flip_p),
    "always_lighter": AdversaryStrategy("always_lighter", _always_lighter, _always_lighter_p),
}


def adversary(name_or_strategy) -> AdversaryStrategy:
    if isinstance(name_or_strategy, AdversaryStrategy):
        return name_or_strategy
    try:
        return ADVERSARIES[name_or_strategy]
    except KeyError:
        raise ConfigError(
            f"unknown adversary {name_or_strategy!r}; built-ins: {sorted(ADVERSARIES)}"
        ) from None


def scripted(fn: Callable[[int, tuple[int, int], np.ndarray], int], name: str = "scripted") -> AdversaryStrategy:
    """Deterministic adversary from ``fn(t, pair, x) -> bin`` (test hook)."""
    return AdversaryStrategy(name, lambda t, pair, x, rng: fn(t, pair, x))


@dataclass(frozen=True)
class StalenessStrategy:
    """Chooses a load estimate inside ``[oldest, current]``.

    ``estimate(bin, current, oldest, window, rng)``; ``support(...)`` (same
    arguments minus ``rng``) returns ``[(value, probability), ...]`` for the
    oracle.  The framework clamps estimates into the admissible range.
    """

    name: str
    estimate: Callable[..., int]
    support: Callable[..., list] | None = None

    def distribution(self, bin, current, oldest, window) -> list[tuple[int, float]]:
        if self.support is not None:
            return self.support(bin, current, oldest, window)
        return [(self.estimate(bin, current, oldest, window, None), 1.0)]


def _boundary_load(bin, current, oldest, window):
    return current - window.count_since(bin, window.batch_boundary())


STALENESS: dict[str, StalenessStrategy] = {
    "oldest": StalenessStrategy(
        "oldest",
        lambda bin, cur, old, w, rng: old,
        lambda bin, cur, old, w: [(old, 1.0)],
    ),
    "freshest": StalenessStrategy(
        "freshest",
        lambda bin, cur, old, w, rng: cur,
        lambda bin, cur, old, w: [(cur, 1.0)],
    ),
    "random_in_window": StalenessStrategy(
        "random_in_window",
        lambda bin, cur, old, w, rng: old + rng.index(cur - old + 1),
        lambda bin, cur, old, w: [(v, 1.0 / (cur - old + 1)) for v in range(old, cur + 1)],
    ),
    "batch_boundary": StalenessStrategy(
        "batch_boundary",
        lambda bin, cur, old, w, rng: _boundary_load(bin, cur, old, w),
        lambda bin, cur, old, w: [(_boundary_load(bin, cur, old, w), 1.0)],
    ),
}


def staleness(name_or_strategy) -> StalenessStrategy:
    if isinstance(name_or_strategy, StalenessStrategy):
        return name_or_strategy
    try:
        return STALENESS[name_or_strategy]
    except KeyError:
        raise ConfigError(
            f"unknown staleness strategy {name_or_strategy!r}; built-ins: {sorted(STALENESS)}"
        ) from None


# ---------------------------------------------------------------------------
# process specs


@dataclass(frozen=True)
class ProcessSpec:
    process: ClassVar[str] = ""
    samples: ClassVar[int] = 2

    def to_dict(self) -> dict[str, Any]:
        return {"process": self.process}

    def label(self) -> str:
        """Short parameter string for tables (e.g. ``g=4``)."""
        return ""

    def make_aux(self, state: LoadState):
        return None

    def correct_probability(self, delta: np.ndarray) -> np.ndarray:
        return np.ones_like(delta, dtype=float)

    def effective_loads(self, state: LoadState, aux) -> np.ndarray:
        return state.x

    def decide(self, state: LoadState, i1: int, i2: int, aux, rng: RngStream, t: int) -> int:
        e = self.effective_loads(state, aux)
        a, b = int(e[i1]), int(e[i2])
        p = float(self.correct_probability(np.array([abs(a - b)]))[0])
        return _compare(i1, i2, a, b, p, rng)

    def pair_probabilities(self, state: LoadState, aux=None, t: int | None = None) -> np.ndarray:
        e = self.effective_loads(state, aux).astype(np.int64)
        delta = np.abs(e[:, None] - e[None, :])
        return _compare_matrix(e, self.correct_probability(delta))


@dataclass(frozen=True)
class OneChoice(ProcessSpec):
    process: ClassVar[str] = "one_choice"
    samples: ClassVar[int] = 1

    def pair_probabilities(self, state, aux=None, t=None):
        # Expressed as a pair rule: a uniformly random member of the pair.
        return np.full((state.n, state.n), 0.5)

    def correct_probability(self, delta):
        return np.full_like(delta, 0.5, dtype=float)


@dataclass(frozen=True)
class TwoChoice(ProcessSpec):
    tie_break: str = "random"
    process: ClassVar[str] = "two_choice"

    def __post_init__(self):
        if self.tie_break not in ("random", "lower_index"):
            raise ParameterError(f"tie_break must be 'random' or 'lower_index', got {self.tie_break!r}")

    def to_dict(self):
        return {"process": self.process, "tie_break": self.tie_break}

    def decide(self, state, i1, i2, aux, rng, t):
        a, b = int(state.x[i1]), int(state.x[i2])
        if a == b and self.tie_break == "lower_index":
            return min(i1, i2)
        return _compare(i1, i2, a, b, 1.0, rng)

    def pair_probabilities(self, state, aux=None, t=None):
        p = super().pair_probabilities(state, aux, t)
        if self.tie_break == "lower_index":
            idx = np.arange(state.n)
            ties = state.x[:, None] == state.x[None, :]
            p = np.where(ties, (idx[:, None] <= idx[None, :]).astype(float), p)
        return p


@dataclass(frozen=True)
class OnePlusBeta(ProcessSpec):
    """Two-Choice with probability beta, otherwise One-Choice."""

    beta: float = 0.5
    process: ClassVar[str] = "one_plus_beta"

    def __post_init__(self):
        if not 0 < self.beta <= 1:
            raise ParameterError(f"beta must lie in (0, 1], got {self.beta}")

    def to_dict(self):
        return {"process": self.process, "beta": self.beta}

    def label(self):
        return f"beta={self.beta:g}"

    def correct_probability(self, delta):
        return np.full_like(delta, 0.5 + 0.5 * self.beta, dtype=float)


@dataclass(frozen=True)
class GBounded(ProcessSpec):
    """The heavier bin wins whenever the loads differ by at most g."""

    g: int = 0
    process: ClassVar[str] = "g_bounded"

    def __post_init__(self):
        _check_g(self.g)

    def to_dict(self):
        return {"process": self.process, "g": self.g}

    def label(self):
        return f"g={self.g}"

    def correct_probability(self, delta):
        return (np.asarray(delta) > self.g).astype(float)


@dataclass(frozen=True)
class GMyopicComp(ProcessSpec):
    """A fair coin decides whenever the loads differ by at most g."""

    g: int = 0
    process: ClassVar[str] = "g_myopic_comp"

    def __post_init__(self):
        _check_g(self.g)

    def to_dict(self):
        return {"process": self.process, "g": self.g}

    def label(self):
        return f"g={self.g}"

    def correct_probability(self, delta):
        return np.where(np.asarray(delta) > self.g, 1.0, 0.5)


@dataclass(frozen=True)
class NoisyComp(ProcessSpec):
    """Comparison correct with probability rho(delta).

    ``rho(delta) = rho_values[delta]`` for ``delta < len(rho_values)`` and
    ``rho_tail`` beyond.  Any non-decreasing map into [0, 1] is accepted.
    """

    rho_values: tuple = ()
    rho_tail: float = 1.0
    process: ClassVar[str] = "noisy_comp"

    def __post_init__(self):
        vals = tuple(float(v) for v in self.rho_values)
        object.__setattr__(self, "rho_values", vals)
        object.__setattr__(self, "rho_tail", float(self.rho_tail))
        seq = vals + (self.rho_tail,)
        if any(not 0.0 <= v <= 1.0 for v in seq):
            raise ParameterError("rho must map into [0, 1]")
        if any(b < a for a, b in zip(seq, seq[1:])):
            raise ParameterError("rho must be non-decreasing in delta")

    @classmethod
    def constant(cls, p: float) -> "NoisyComp":
        return cls((), p)

    @classmethod
    def step_function(cls, g: int, inside: float, outside: float = 1.0) -> "NoisyComp":
        """``inside`` for delta <= g, ``outside`` above (g-Bounded: 0, g-Myopic: 1/2)."""
        return cls((inside,) * (g + 1), outside)

    @classmethod
    def from_function(cls, rho: Callable[[int], float], max_delta: int) -> "NoisyComp":
        """Tabulate ``rho`` on 0..max_delta; it must be constant from max_delta on."""
        return cls(tuple(rho(d) for d in range(max_delta)), rho(max_delta))

    def rho(self, delta: int) -> float:
        return self.rho_values[delta] if delta < len(self.rho_values) else self.rho_tail

    def to_dict(self):
        return {"process": self.process, "rho_values": list(self.rho_values), "rho_tail": self.rho_tail}

    def label(self):
        if not self.rho_values:
            return f"rho={self.rho_tail:g}"
        return f"rho[{len(self.rho_values)}]"

    def correct_probability(self, delta):
        delta = np.asarray(delta)
        table = np.array(self.rho_values + (self.rho_tail,))
        return table[np.minimum(delta, len(self.rho_values))]


@dataclass(frozen=True)
class SigmaNoisyLoad(ProcessSpec):
    """Gaussian load noise of scale sigma.

    ``rho_formula`` uses the closed-form correctness probability
    ``1 - exp(-(delta/sigma)^2)/2``; ``gaussian_estimates`` perturbs both
    sampled loads by fresh independent N(0, sigma^2) draws.
    """

    sigma: float = 1.0
    mode: str = "rho_formula"
    process: ClassVar[str] = "sigma_noisy_load"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ParameterError(f"sigma must be positive, got {self.sigma}")
        if self.mode not in ("rho_formula", "gaussian_estimates"):
            raise ParameterError(f"unknown sigma_noisy_load mode {self.mode!r}")

    def to_dict(self):
        return {"process": self.process, "sigma": self.sigma, "mode": self.mode}

    def label(self):
        return f"sigma={self.sigma:g}"

    def correct_probability(self, delta):
        delta = np.asarray(delta, dtype=float)
        if self.mode == "rho_formula":
            r = delta / self.sigma
            return 1.0 - 0.5 * np.exp(-(r * r))
        return _gaussian_correct(delta, self.sigma)

    def decide(self, state, i1, i2, aux, rng, t):
        if self.mode == "rho_formula":
            a, b = int(state.x[i1]), int(state.x[i2])
            return _compare(i1, i2, a, b, rho_sigma(abs(a - b), self.sigma), rng)
        e1 = state.x[i1] + self.sigma * rng.normal()
        e2 = state.x[i2] + self.sigma * rng.normal()
        return i2 if e2 < e1 else i1


@dataclass(frozen=True)
class GAdvComp(ProcessSpec):
    """The adversary decides every comparison with load difference at most g."""

    g: int = 0
    adversary: AdversaryStrategy = field(default_factory=lambda: ADVERSARIES["greedy_max"])
    strict: bool = False
    process: ClassVar[str] = "g_adv_comp"

    def __post_init__(self):
        _check_g(self.g)
        object.__setattr__(self, "adversary", adversary(self.adversary))

    def to_dict(self):
        d = {"process": self.process, "g": self.g, "adversary": self.adversary.name}
        if self.strict:
            d["strict"] = True
        return d

    def label(self):
        return f"g={self.g}"

    def make_aux(self, state):
        return AdversaryLog()

    def decide(self, state, i1, i2, aux, rng, t):
        x = state.x.view()
        x.flags.writeable = False
        a, b = int(x[i1]), int(x[i2])
        if abs(a - b) > self.g:
            lighter = i1 if a < b else i2
            if self.strict:
                chosen = self.adversary.choose(t, (i1, i2), x, rng)
                if chosen != lighter and aux is not None:
                    aux.violations.append((t, i1, i2, chosen))
            return lighter
        chosen = self.adversary.choose(t, (i1, i2), x, rng)
        if chosen != i1 and chosen != i2:
            raise ContractViolation(
                f"adversary {self.adversary.name!r} returned bin {chosen} outside the sampled pair ({i1}, {i2})"
            )
        return chosen

    def pair_probabilities(self, state, aux=None, t=None):
        x = state.x.astype(np.int64)
        delta = np.abs(x[:, None] - x[None, :])
        name = self.adversary.name
        builtin = ADVERSARIES.get(name)
        if builtin is self.adversary:
            inside = {"greedy_max": 0.0, "coin_flip": 0.5, "always_lighter": 1.0}[name]
            return _compare_matrix(x, np.where(delta > self.g, 1.0, inside))
        p = _compare_matrix(x, np.ones_like(delta, dtype=float))
        view = x.view()
        view.flags.writeable = False
        tt = state.t + 1 if t is None else t
        for i1, i2 in zip(*np.nonzero(delta <= self.g)):
            p[i1, i2] = self.adversary.probability(tt, (int(i1), int(i2)), view)
        return p


@dataclass(frozen=True)
class BBatch(ProcessSpec):
    """Decisions use the loads at the start of the current batch of b balls."""

    b: int = 1
    process: ClassVar[str] = "b_batch"

    def __post_init__(self):
        if int(self.b) != self.b or self.b < 1:
            raise ParameterError(f"b must be a positive integer, got {self.b}")

    def to_dict(self):
        return {"process": self.process, "b": self.b}

    def label(self):
        return f"b={self.b}"

    def make_aux(self, state):
        # Treats the given state as the latest batch boundary.
        aux = BatchSnapshot(state.n, self.b)
        aux.snapshot[:] = state.x
        aux.taken_at = state.t
        return aux

    def effective_loads(self, state, aux):
        _check_aux(self, aux, BatchSnapshot, state)
        return aux.snapshot


@dataclass(frozen=True)
class TauDelay(ProcessSpec):
    """Decisions use estimates inside the last tau steps' load range."""

    tau: int = 1
    staleness: StalenessStrategy = field(default_factory=lambda: STALENESS["oldest"])
    process: ClassVar[str] = "tau_delay"

    def __post_init__(self):
        if int(self.tau) != self.tau or self.tau < 1:
            raise ParameterError(f"tau must be a positive integer, got {self.tau}")
        object.__setattr__(self, "staleness", staleness(self.staleness))

    def to_dict(self):
        return {"process": self.process, "tau": self.tau, "staleness": self.staleness.name}

    def label(self):
        return f"tau={self.tau}"

    def make_aux(self, state):
        return DelayWindow(state.n, self.tau)

    def _estimate(self, state, aux, bin, rng):
        cur = int(state.x[bin])
        old = cur - aux.count(bin)
        est = self.staleness.estimate(bin, cur, old, aux, rng)
        return min(max(int(est), old), cur)

    def decide(self, state, i1, i2, aux, rng, t):
        _check_aux(self, aux, DelayWindow, state)
        e1 = self._estimate(state, aux, i1, rng)
        e2 = self._estimate(state, aux, i2, rng)
        return _compare(i1, i2, e1, e2, 1.0, rng)

    def estimate_distribution(self, state, aux, bin) -> list[tuple[int, float]]:
        cur = int(state.x[bin])
        old = cur - aux.count(bin)
        out: dict[int, float] = {}
        for v, p in self.staleness.distribution(bin, cur, old, aux):
            v = min(max(int(v), old), cur)
            out[v] = out.get(v, 0.0) + p
        return sorted(out.items())

    def pair_probabilities(self, state, aux=None, t=None):
        if aux is None:
            aux = self.make_aux(state)
        _check_aux(self, aux, DelayWindow, state)
        n = state.n
        dists = [self.estimate_distribution(state, aux, i) for i in range(n)]
        if all(len(d) == 1 for d in dists):
            e = np.array([d[0][0] for d in dists], dtype=np.int64)
            return _compare_matrix(e, np.ones((n, n)))
        p = np.empty((n, n))
        for i1 in range(n):
            for i2 in range(n):
                p[i1, i2] = _first_wins(dists[i1], dists[i2])
        return p


def _first_wins(d1, d2) -> float:
    """P[e1 < e2] + P[e1 == e2] / 2 for independent discrete estimates."""
    total = 0.0
    for v1, p1 in d1:
        for v2, p2 in d2:
            if v1 < v2:
                total += p1 * p2
            elif v1 == v2:
                total += 0.5 * p1 * p2
    return total


def _check_g(g) -> None:
    if int(g) != g or g < 0:
        raise ParameterError(f"g must be a non-negative integer, got {g}")


def _check_aux(spec, aux, kind, state) -> None:
    if not isinstance(aux, kind):
        raise ContractViolation(f"{spec.process} needs {kind.__name__} auxiliary state, got {type(aux).__name__}")
    if aux.n != state.n:
        raise ContractViolation(f"auxiliary state tracks {aux.n} bins, load state has {state.n}")


# ---------------------------------------------------------------------------
# stepping


def make_aux(spec: ProcessSpec, state: LoadState):
    """Fresh auxiliary state for running ``spec`` from ``state``."""
    return spec.make_aux(state)


def step(spec: ProcessSpec, state: LoadState, aux, rng: RngStream) -> int:
    """Sample bin(s) and return the bin that receives the next ball."""
    if hasattr(aux, "sync"):
        aux.sync(state)
    elif isinstance(spec, (BBatch, TauDelay)):
        raise ContractViolation(f"{spec.process} needs auxiliary state from make_aux()")
    if spec.samples == 1:
        return rng.index(state.n)
    i1 = rng.index(state.n)
    i2 = rng.index(state.n)
    return spec.decide(state, i1, i2, aux, rng, state.t + 1)


def advance(spec: ProcessSpec, state: LoadState, aux, rng: RngStream) -> int:
    """One full step: decide, allocate and update the auxiliary state."""
    bin = step(spec, state, aux, rng)
    allocate(state, bin)
    if hasattr(aux, "record"):
        aux.record(bin, state)
    return bin


def simulate(spec: ProcessSpec, n: int, m: int, rng: RngStream) -> LoadState:
    """Reference (pure Python) run of ``m`` balls into ``n`` empty bins."""
    state = LoadState(n)
    aux = make_aux(spec, state)
    for _ in range(m):
        advance(spec, state, aux, rng)
    return state


# ---------------------------------------------------------------------------
# JSON form

_REGISTRY = {
    cls.process: cls
    for cls in (OneChoice, TwoChoice, OnePlusBeta, GBounded, GMyopicComp, NoisyComp,
                SigmaNoisyLoad, GAdvComp, BBatch, TauDelay)
}


def spec_from_dict(d: dict) -> ProcessSpec:
    if not isinstance(d, dict) or "process" not in d:
        raise ConfigError("process spec must be an object with a 'process' field")
    d = dict(d)
    name = d.pop("process")
    cls = _REGISTRY.get(name)
    if cls is None:
        raise ConfigError(f"unknown process {name!r}; known: {sorted(_REGISTRY)}")
    if cls is NoisyComp and "rho" in d:
        rho = d.pop("rho")
        if isinstance(rho, (int, float)):
            d["rho_tail"] = rho
        else:
            d["rho_values"] = list(rho)
            d.setdefault("rho_tail", rho[-1] if rho else 1.0)
    if "rho_values" in d:
        d["rho_values"] = tuple(d["rho_values"])
    try:
        return cls(**d)
    except TypeError as exc:
        raise ConfigError(f"bad fields for {name}: {exc}") from None
