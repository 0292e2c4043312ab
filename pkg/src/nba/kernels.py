"""Compiled simulation loops.

The kernels consume random numbers in exactly the order of
:func:`nba.processes.step`, so a kernel run and a reference run from the same
stream produce the same load vector.  Specs with user callbacks (custom
adversaries or staleness strategies) have no kernel form and fall back to the
reference loop.

Stale information is tracked without copying load vectors:

* batch snapshots as per-bin counts of allocations since the last boundary,
  reset through a list of touched bins (O(b) per batch);
* delay windows as a ring buffer of the last ``tau - 1`` allocated bins plus
  per-bin in-window counts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import processes as P
from .rng import index, normal, uniform

# process codes
ONE_CHOICE = 0
TWO_CHOICE = 1
COMPARE_P = 2
G_BOUNDED = 3
G_MYOPIC = 4
NOISY_TABLE = 5
SIGMA_RHO = 6
SIGMA_GAUSS = 7
B_BATCH = 8
TAU_DELAY = 9

# tau-delay staleness codes
OLDEST = 0
FRESHEST = 1
RANDOM_IN_WINDOW = 2
BATCH_BOUNDARY = 3
_STALENESS_CODES = {"oldest": OLDEST, "freshest": FRESHEST,
                    "random_in_window": RANDOM_IN_WINDOW, "batch_boundary": BATCH_BOUNDARY}

# meta slots
_T, _MAX, _NTOUCHED, _RHEAD, _RSIZE = range(5)


@dataclass(frozen=True)
class KernelPlan:
    code: int
    iparams: np.ndarray
    fparams: np.ndarray
    table: np.ndarray


def kernel_plan(spec: P.ProcessSpec) -> KernelPlan | None:
    """Kernel encoding of ``spec``, or None when only the reference loop applies."""
    ip = np.zeros(2, dtype=np.int64)
    fp = np.zeros(1, dtype=np.float64)
    table = np.ones(1, dtype=np.float64)
    if isinstance(spec, P.OneChoice):
        code = ONE_CHOICE
    elif isinstance(spec, P.TwoChoice):
        code = TWO_CHOICE
        ip[0] = spec.tie_break == "lower_index"
    elif isinstance(spec, P.OnePlusBeta):
        code = COMPARE_P
        fp[0] = float(spec.correct_probability(np.array([1]))[0])
    elif isinstance(spec, (P.GBounded, P.GMyopicComp)):
        code = G_BOUNDED if isinstance(spec, P.GBounded) else G_MYOPIC
        ip[0] = spec.g
    elif isinstance(spec, P.NoisyComp):
        code = NOISY_TABLE
        table = np.array(spec.rho_values + (spec.rho_tail,), dtype=np.float64)
    elif isinstance(spec, P.SigmaNoisyLoad):
        code = SIGMA_RHO if spec.mode == "rho_formula" else SIGMA_GAUSS
        fp[0] = spec.sigma
    elif isinstance(spec, P.GAdvComp):
        if spec.strict or P.ADVERSARIES.get(spec.adversary.name) is not spec.adversary:
            return None
        code = {"greedy_max": G_BOUNDED, "coin_flip": G_MYOPIC, "always_lighter": TWO_CHOICE}[spec.adversary.name]
        if code != TWO_CHOICE:
            ip[0] = spec.g
    elif isinstance(spec, P.BBatch):
        code = B_BATCH
        ip[0] = spec.b
    elif isinstance(spec, P.TauDelay):
        s = _STALENESS_CODES.get(spec.staleness.name)
        if s is None or P.STALENESS[spec.staleness.name] is not spec.staleness:
            return None
        code = TAU_DELAY
        ip[0] = spec.tau
        ip[1] = s
    else:
        return None
    return KernelPlan(code, ip, fp, table)


class KernelState:
    """Load vector, rng state and auxiliary arrays for one kernel run."""

    def __init__(self, plan: KernelPlan, n: int, rng_state: np.ndarray):
        self.plan = plan
        self.x = np.zeros(n, dtype=np.int64)
        self.s = rng_state
        self.meta = np.zeros(5, dtype=np.int64)
        code, ip = plan.code, plan.iparams
        batch = code == B_BATCH or (code == TAU_DELAY and ip[1] == BATCH_BOUNDARY)
        windowed = code == TAU_DELAY and ip[1] in (OLDEST, RANDOM_IN_WINDOW)
        self.since = np.zeros(n if batch else 1, dtype=np.int64)
        self.touched = np.zeros(min(int(ip[0]), n) if batch else 1, dtype=np.int64)
        self.ring = np.zeros(max(int(ip[0]) - 1, 1) if windowed else 1, dtype=np.int64)
        self.wcnt = np.zeros(n if windowed else 1, dtype=np.int64)

    @property
    def t(self) -> int:
        return int(self.meta[_T])

    @property
    def max_load(self) -> int:
        return int(self.meta[_MAX])

    def advance(self, steps: int) -> None:
        p = self.plan
        run_steps(p.code, p.iparams, p.fparams, p.table, self.x, self.s, self.meta,
                  self.since, self.touched, self.ring, self.wcnt, steps)


@njit(inline="always")
def _cmp(i1, i2, a, b, pc, s):
    if a == b:
        return i1 if uniform(s) < 0.5 else i2
    if a < b:
        lo, hi = i1, i2
    else:
        lo, hi = i2, i1
    if pc >= 1.0:
        return lo
    if pc <= 0.0:
        return hi
    return lo if uniform(s) < pc else hi


@njit(inline="always")
def _tau_estimate(strategy, bin, x, since, wcnt, s):
    cur = x[bin]
    if strategy == 0:
        return cur - wcnt[bin]
    if strategy == 1:
        return cur
    if strategy == 2:
        return cur - wcnt[bin] + index(s, wcnt[bin] + 1)
    return cur - since[bin]


@njit(nogil=True, cache=True)
def run_steps(code, ip, fp, table, x, s, meta, since, touched, ring, wcnt, nsteps):
    n = x.shape[0]
    t = meta[0]
    mx = meta[1]
    ntouched = meta[2]
    rhead = meta[3]
    rsize = meta[4]
    g = ip[0]
    tau = ip[0]
    strategy = ip[1]
    batched = code == 8 or (code == 9 and strategy == 3)
    windowed = code == 9 and (strategy == 0 or strategy == 2)
    period = ip[0]
    cap = ring.shape[0]
    last = table.shape[0] - 1
    for _ in range(nsteps):
        if batched and t % period == 0:
            for k in range(ntouched):
                since[touched[k]] = 0
            ntouched = 0
        if code == 0:
            c = index(s, n)
        else:
            i1 = index(s, n)
            i2 = index(s, n)
            a = x[i1]
            b = x[i2]
            if code == 1:
                if a == b and ip[0] == 1:
                    c = min(i1, i2)
                else:
                    c = _cmp(i1, i2, a, b, 1.0, s)
            elif code == 2:
                c = _cmp(i1, i2, a, b, fp[0], s)
            elif code == 3:
                c = _cmp(i1, i2, a, b, 0.0 if abs(a - b) <= g else 1.0, s)
            elif code == 4:
                c = _cmp(i1, i2, a, b, 0.5 if abs(a - b) <= g else 1.0, s)
            elif code == 5:
                c = _cmp(i1, i2, a, b, table[min(abs(a - b), last)], s)
            elif code == 6:
                r = abs(a - b) / fp[0]
                c = _cmp(i1, i2, a, b, 1.0 - 0.5 * math.exp(-(r * r)), s)
            elif code == 7:
                f1 = a + fp[0] * normal(s)
                f2 = b + fp[0] * normal(s)
                c = i2 if f2 < f1 else i1
            elif code == 8:
                c = _cmp(i1, i2, a - since[i1], b - since[i2], 1.0, s)
            else:
                e1 = _tau_estimate(strategy, i1, x, since, wcnt, s)
                e2 = _tau_estimate(strategy, i2, x, since, wcnt, s)
                c = _cmp(i1, i2, e1, e2, 1.0, s)
        v = x[c] + 1
        x[c] = v
        t += 1
        if v > mx:
            mx = v
        if batched:
            since[c] += 1
            if since[c] == 1:
                touched[ntouched] = c
                ntouched += 1
        elif windowed and tau > 1:
            if rsize == cap:
                wcnt[ring[rhead]] -= 1
                ring[rhead] = c
                rhead += 1
                if rhead == cap:
                    rhead = 0
            else:
                pos = rhead + rsize
                if pos >= cap:
                    pos -= cap
                ring[pos] = c
                rsize += 1
            wcnt[c] += 1
    meta[0] = t
    meta[1] = mx
    meta[2] = ntouched
    meta[3] = rhead
    meta[4] = rsize


@njit(nogil=True, cache=True)
def run_many(code, ip, fp, table, n, m, runs, s, since, touched, ring, wcnt, out_max):
    """``runs`` independent runs of ``m`` balls from one stream; records max loads."""
    x = np.zeros(n, dtype=np.int64)
    meta = np.zeros(5, dtype=np.int64)
    for r in range(runs):
        x[:] = 0
        meta[:] = 0
        since[:] = 0
        wcnt[:] = 0
        run_steps(code, ip, fp, table, x, s, meta, since, touched, ring, wcnt, m)
        out_max[r] = meta[1]


def sample_max_loads(spec: P.ProcessSpec, n: int, m: int, runs: int, rng_state: np.ndarray) -> np.ndarray:
    """Final max loads of many short runs drawn back to back from one stream."""
    plan = kernel_plan(spec)
    if plan is None:
        raise ValueError(f"{spec.process} with custom callbacks has no kernel form")
    ks = KernelState(plan, n, rng_state)
    out = np.zeros(runs, dtype=np.int64)
    run_many(plan.code, plan.iparams, plan.fparams, plan.table, n, m, runs, rng_state,
             ks.since, ks.touched, ks.ring, ks.wcnt, out)
    return out
