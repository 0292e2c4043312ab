"""Randomized certification of the one-step drop inequalities.

Each suite draws states and conforming allocation vectors, computes the exact
expected change with :mod:`nba.oracle` and compares it with the claimed
upper bound.  A negative control drops the precondition on purpose, so the
suite must then report violations.

Suites
------
``a``      super-exponential potential under the event K:
           ``E[Phi'] <= Phi (1 - 1/n) + 2``.
``b``      Lambda with offset 730g at a good step (``Delta <= 365 n g``):
           ``E[Lambda'] <= Lambda (1 - 2 alpha eps / n) + 18 alpha``.
``c``      Lambda at any step with ``max q <= 2/n``:
           ``E[Lambda'] <= Lambda (1 + 3 alpha / n)``.
``d``      quadratic potential under g-Adv-Comp:
           ``E[dUpsilon] <= -Delta/n + 2g + 1``.
``gamma``  hyperbolic cosine change against ``h(y) + sum q_i f(y_i)``.
``two_choice`` quadratic potential under the exact Two-Choice vector:
           ``E[dUpsilon] <= -Delta/n + 1``.

Comparisons carry a relative rounding allowance of ``1e-12`` of the bound's
scale; the quadratic suites are exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import oracle as O
from . import potentials as pot
from .core import LoadState, normalized
from .errors import ConfigError

SUITES = ("a", "b", "c", "d", "gamma", "two_choice")
_SUITE_KEYS = {name: i for i, name in enumerate(SUITES)}

ALPHA = 1.0 / 18.0
EPS = 1.0 / 12.0
D = 365
C4 = 730
REL_TOL = 1e-12


@dataclass
class SuiteReport:
    suite: str
    trials: int
    violations: int = 0
    worst_margin: float = math.inf
    failures: list = field(default_factory=list)
    negative_control: bool = False
    # Trials where the inequality was non-trivial (e.g. a bin beyond the offset).
    covered: int = 0

    def add(self, margin: float, scale: float, record: dict) -> None:
        rel = margin / max(1.0, abs(scale))
        self.worst_margin = min(self.worst_margin, rel)
        if margin < -REL_TOL * max(1.0, abs(scale)):
            self.violations += 1
            if len(self.failures) < 5:
                self.failures.append(record)

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "trials": self.trials,
            "violations": self.violations,
            "worst_margin": self.worst_margin if math.isfinite(self.worst_margin) else None,
            "negative_control": self.negative_control,
            "covered": self.covered,
            "failures": self.failures,
        }


def _rng(seed: int, suite: str, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_SUITE_KEYS[suite], trial)))


def random_loads(rng: np.random.Generator, n: int, high: int) -> np.ndarray:
    """Loads of one of three shapes: uniform, clustered, or a few outliers."""
    kind = rng.integers(3)
    if kind == 0:
        return rng.integers(0, high + 1, size=n)
    if kind == 1:
        base = rng.integers(0, high + 1)
        return np.clip(base + rng.integers(-3, 4, size=n), 0, None)
    x = rng.integers(0, max(high // 20, 1) + 1, size=n) + high // 2
    k = rng.integers(1, max(n // 4, 1) + 1)
    idx = rng.choice(n, size=k, replace=False)
    x[idx] += rng.integers(-high // 2, high // 2 + 1, size=k)
    return np.clip(x, 0, None)


def random_adversary(rng: np.random.Generator, n: int) -> np.ndarray:
    """Probability of choosing ``i1`` for every ordered pair: greedy, coin or arbitrary."""
    kind = rng.integers(4)
    if kind == 0:
        return np.zeros((n, n))  # greedy_max on unequal pairs; ties fixed below
    if kind == 1:
        return np.full((n, n), 0.5)
    if kind == 2:
        return rng.integers(0, 2, size=(n, n)).astype(float)
    return rng.random((n, n))


def adv_vector(rng, state: LoadState, g: int) -> O.AllocationVector:
    x = state.x
    inside = random_adversary(rng, state.n)
    heavier_first = (x[:, None] > x[None, :]).astype(float)
    # The all-zeros draw means "pick the heavier"; keep ties as coins.
    if not inside.any():
        inside = np.where(x[:, None] == x[None, :], 0.5, heavier_first)
    return O.vector_from_pairs(O.adv_comp_pairs(x, g, inside), state)


def offending_pairs(state: LoadState, p: np.ndarray, g: int, limit: int = 5) -> list:
    """Bin pairs at distance > g whose mass goes (partly) to the heavier bin."""
    x = state.x
    d = x[:, None] - x[None, :]
    bad = (np.abs(d) > g) & (((d > 0) & (p > 0)) | ((d < 0) & (p < 1)))
    i, j = np.nonzero(bad)
    return [(int(a), int(b), int(x[a]), int(x[b])) for a, b in list(zip(i, j))[:limit]]


# ---------------------------------------------------------------------------
# suites


def _suite_a(rng, negative: bool, report: SuiteReport):
    n = int(rng.integers(4, 33))
    x = random_loads(rng, n, int(rng.choice([20, 200])))
    state = LoadState.from_loads(x)
    view = normalized(state)
    phi = float(rng.uniform(4.0, n))
    # Keep the largest exponent comfortably below the overflow guard.
    z_min = max(1, math.ceil(view.y[0] + 2 - 600.0 / phi))
    z = int(rng.integers(z_min, z_min + 6))
    if negative:
        z = max(1, math.floor(view.y[0]) - 1)
        z = max(z, z_min)
    heavy = view.y >= z - 1
    if (view.y > z).any():
        report.covered += 1
    cap = math.exp(-phi) / n
    q = np.zeros(n)
    if negative:
        q[0] = 1.0
    else:
        light = ~heavy
        if not light.any():
            return False
        q[heavy] = cap * rng.choice([1.0, rng.random()], size=heavy.sum())
        w = rng.random(light.sum()) ** rng.choice([1.0, 4.0])
        q[light] = (1.0 - q[heavy].sum()) * w / w.sum()
        if not O.k_event_holds(q, view, phi, z):
            return False
    p = pot.SuperExp(phi, z)
    p.check_n(n)
    value = pot.evaluate(p, view)
    lhs = value + O.expected_change(p, q, view)
    rhs = value * (1.0 - 1.0 / n) + 2.0
    report.add(rhs - lhs, rhs, {"loads": x.tolist(), "phi": phi, "z": z, "q": q.tolist(),
                                "lhs": lhs, "rhs": rhs})
    return True


def _lambda_state(rng, n: int, g: int) -> np.ndarray:
    """Loads whose normalized values often leave the band of width 730g."""
    off = C4 * g
    base = 2 * off + 200 * g
    x = base + rng.integers(-10 * g, 10 * g + 1, size=n)
    k = int(rng.integers(0, min(4, n // 4) + 1))
    if k:
        idx = rng.choice(n, size=k, replace=False)
        sign = rng.choice([-1, 1], size=k)
        x[idx] += sign * rng.integers(off - 5 * g, off + 150 * g, size=k)
    return np.clip(x, 0, None)


def _suite_b(rng, negative: bool, report: SuiteReport):
    n = int(rng.integers(4, 65))
    g = int(rng.choice([1, 2, 4]))
    x = _lambda_state(rng, n, g) if rng.random() < 0.7 else random_loads(rng, n, 2000)
    state = LoadState.from_loads(x)
    view = normalized(state)
    delta = float(pot.evaluate(pot.AbsoluteValue(), view))
    if delta > D * n * g:
        return False
    alpha = ALPHA if rng.random() < 0.7 else float(rng.uniform(1e-3, ALPHA))
    if negative:
        q = np.zeros(n)
        q[0] = 1.0
    else:
        q = adv_vector(rng, state, g).q
    p = pot.Lambda(alpha, C4 * g)
    if np.abs(view.y).max() > C4 * g:
        report.covered += 1
    value = pot.evaluate(p, view)
    lhs = value + O.expected_change(p, q, view)
    rhs = value * (1.0 - 2.0 * alpha * EPS / n) + 18.0 * alpha
    report.add(rhs - lhs, rhs, {"loads": x.tolist(), "g": g, "alpha": alpha, "q": q.tolist(),
                                "lhs": lhs, "rhs": rhs})
    return True


def _suite_c(rng, negative: bool, report: SuiteReport):
    n = int(rng.integers(2, 65))
    g = int(rng.choice([1, 2, 4, 8]))
    c4 = float(rng.choice([C4, rng.uniform(0.01, 10.0)]))
    x = _lambda_state(rng, n, g) if c4 == C4 else random_loads(rng, n, 300)
    state = LoadState.from_loads(x)
    view = normalized(state)
    alpha = float(rng.choice([0.5, ALPHA, rng.uniform(1e-3, 0.5)]))
    excess = float(np.abs(view.y).max()) - c4 * g
    if alpha * excess > 600.0:
        alpha = 600.0 / excess  # stay below the overflow guard
    if negative:
        q = np.zeros(n)
        q[0] = 1.0
    elif rng.random() < 0.5:
        q = adv_vector(rng, state, g).q
    else:
        w = rng.random(n) ** rng.choice([1.0, 3.0])
        q = w / w.sum()
        if q.max() > 2.0 / n:
            # Shrink toward uniform until the cap is met exactly.
            s = (2.0 / n - 1.0 / n) / (q.max() - 1.0 / n)
            q = 1.0 / n + s * (q - 1.0 / n)
    if not negative and q.max() > 2.0 / n * (1 + 1e-12):
        return False
    p = pot.Lambda(alpha, c4 * g)
    if np.abs(view.y).max() > c4 * g:
        report.covered += 1
    value = pot.evaluate(p, view)
    lhs = value + O.expected_change(p, q, view)
    rhs = value * (1.0 + 3.0 * alpha / n)
    report.add(rhs - lhs, rhs, {"loads": x.tolist(), "alpha": alpha, "offset": c4 * g,
                                "q": q.tolist(), "lhs": lhs, "rhs": rhs})
    return True


def _suite_d(rng, negative: bool, report: SuiteReport):
    n = int(rng.integers(2, 65))
    g = int(rng.choice([1, 2, 4, int(rng.integers(1, 9))]))
    x = random_loads(rng, n, int(rng.choice([10, 100, 2000])))
    state = LoadState.from_loads(x)
    view = normalized(state)
    if negative:
        # Every comparison goes to the heavier bin, including those beyond g.
        xs = state.x
        pm = np.where(xs[:, None] == xs[None, :], 0.5, (xs[:, None] > xs[None, :]).astype(float))
        q = O.vector_from_pairs(pm, state).q
        pairs = offending_pairs(state, pm, g)
    else:
        q = adv_vector(rng, state, g).q
        pairs = []
    lhs = O.expected_change_exact(pot.Quadratic(), q, view)
    delta = sum(abs(y) for y in O._exact_y(view))
    rhs = -delta / n + 2 * g + 1
    report.add(float(rhs - lhs), float(rhs), {"loads": x.tolist(), "g": g, "q": q.tolist(),
                                              "lhs": float(lhs), "rhs": float(rhs),
                                              "offending_pairs": pairs})
    return True


def _suite_gamma(rng, negative: bool, report: SuiteReport):
    n = int(rng.integers(2, 33))
    x = random_loads(rng, n, int(rng.choice([10, 100, 1000])))
    state = LoadState.from_loads(x)
    view = normalized(state)
    gamma = float(rng.choice([rng.uniform(1e-4, 0.99), -math.log1p(-1 / 384) / rng.integers(1, 17)]))
    if gamma * np.abs(view.y).max() > 600:
        gamma = 600.0 / (np.abs(view.y).max() + 1)
    w = rng.random(n) ** rng.choice([1.0, 5.0])
    q = w / w.sum()
    chk = O.check_gamma_bound(q, view, gamma)
    bound = chk.bound
    if negative:
        bound -= abs(chk.exact) + 1.0
    report.add(bound - chk.exact, max(abs(bound), abs(chk.exact)),
               {"loads": x.tolist(), "gamma": gamma, "q": q.tolist(), "exact": chk.exact, "bound": bound})
    return True


def _suite_two_choice(rng, negative: bool, report: SuiteReport):
    n = int(rng.integers(1, 65))
    x = random_loads(rng, n, int(rng.choice([10, 100, 2000])))
    state = LoadState.from_loads(x)
    view = normalized(state)
    q = O.two_choice_vector(n).q
    if negative:
        q = q[::-1].copy()
    lhs = O.expected_change_exact(pot.Quadratic(), q, view)
    delta = sum(abs(y) for y in O._exact_y(view))
    rhs = -delta / n + 1
    report.add(float(rhs - lhs), float(rhs), {"loads": x.tolist(), "lhs": float(lhs), "rhs": float(rhs)})
    return True


_RUNNERS = {"a": _suite_a, "b": _suite_b, "c": _suite_c, "d": _suite_d,
            "gamma": _suite_gamma, "two_choice": _suite_two_choice}


def run_suite(suite: str, trials: int, seed: int = 0, negative_control: bool = False) -> SuiteReport:
    """Run ``trials`` accepted trials of one suite; trial ``k`` uses its own substream."""
    if suite not in _RUNNERS:
        raise ConfigError(f"unknown suite {suite!r}; available: {', '.join(SUITES)}")
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    report = SuiteReport(suite, trials, negative_control=negative_control)
    runner = _RUNNERS[suite]
    done = 0
    attempt = 0
    while done < trials:
        rng = _rng(seed, suite, attempt)
        attempt += 1
        if runner(rng, negative_control, report):
            done += 1
        elif attempt > 50 * trials:
            raise RuntimeError(f"suite {suite} rejected too many candidate states")
    return report


def run_all(suites=SUITES, trials: int = 10_000, seed: int = 0, negative_control: bool = False) -> list[SuiteReport]:
    return [run_suite(s, trials, seed, negative_control) for s in suites]


__all__ = ["SUITES", "SuiteReport", "run_suite", "run_all", "offending_pairs", "adv_vector", "random_loads"]
