"""Reproducible experiments: repetitions, gap statistics, presets and file output.

Repetition ``r`` of a config always draws from ``substream(master_seed, r)``
and results are merged by repetition index, so output does not depend on the
number of worker threads.  Compiled kernels release the GIL, which lets a
thread pool run repetitions side by side.
"""
from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Sequence

import numpy as np

from . import kernels as K
from . import potentials as pot
from . import processes as P
from .core import LoadState, normalized
from .errors import ConfigError, PotentialOverflowError
from .rng import RngStream

log = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "RunResult",
    "GapSummary",
    "run_experiment",
    "run_repetition",
    "sweep",
    "SweepRow",
    "preset",
    "PRESETS",
    "monte_carlo_pmf",
    "round_half_up",
    "write_runs_csv",
    "write_checkpoints_csv",
    "write_summary_json",
    "load_configs",
]

MAX_CHECKPOINTS = 10_000
MAX_N = 10**8
RUN_COLUMNS = ["config_id", "process", "g_or_param", "n", "m", "repetition", "seed",
               "final_gap", "final_gap_rounded", "runtime_ms"]
CHECKPOINT_COLUMNS = ["config_id", "repetition", "checkpoint_t", "gap", "potential_name", "potential_value"]


def round_half_up(x: float) -> int:
    """Nearest integer, halves rounded up (gaps are non-negative)."""
    return math.floor(x + 0.5)


@dataclass(frozen=True)
class ExperimentConfig:
    spec: P.ProcessSpec
    n: int
    m: int
    repetitions: int = 100
    master_seed: int = 0
    checkpoint_interval: int = 0
    potentials: tuple = ()
    config_id: str = ""
    expectation: dict | None = None
    note: str = ""
    out: str | None = None

    def __post_init__(self):
        for name in ("n", "m", "repetitions"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.n > MAX_N:
            raise ConfigError(f"n={self.n} exceeds the memory guard of {MAX_N}")
        if not isinstance(self.master_seed, (int, np.integer)) or self.master_seed < 0:
            raise ConfigError(f"master_seed must be a non-negative integer, got {self.master_seed!r}")
        if self.checkpoint_interval < 0:
            raise ConfigError("checkpoint_interval must be >= 0")
        if self.checkpoint_interval and self.m / self.checkpoint_interval > MAX_CHECKPOINTS:
            raise ConfigError(
                f"checkpoint_interval={self.checkpoint_interval} gives more than {MAX_CHECKPOINTS} "
                f"checkpoints for m={self.m}"
            )
        object.__setattr__(self, "potentials", tuple(self.potentials))
        if not self.config_id:
            object.__setattr__(self, "config_id", f"{self.spec.process}/{self.spec.label() or '-'}/n={self.n}/m={self.m}")

    def checkpoints(self) -> list[int]:
        """Steps at which gap and potentials are sampled (always includes m)."""
        interval = self.checkpoint_interval
        if not interval and self.potentials:
            interval = max(self.m // 100, 1)
        if not interval:
            return [self.m]
        pts = list(range(interval, self.m + 1, interval))
        if not pts or pts[-1] != self.m:
            pts.append(self.m)
        return pts

    def steps(self) -> int:
        return self.m * self.repetitions

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "config_id": self.config_id,
            "process": self.spec.to_dict(),
            "n": self.n,
            "m": self.m,
            "repetitions": self.repetitions,
            "master_seed": self.master_seed,
            "checkpoint_interval": self.checkpoint_interval,
            "potentials": [p.to_dict() for p in self.potentials],
        }
        if self.expectation:
            d["expectation"] = dict(self.expectation)
        if self.note:
            d["note"] = self.note
        if self.out:
            d["out"] = self.out
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("experiment config must be a JSON object")
        known = {"config_id", "process", "n", "m", "repetitions", "master_seed",
                 "checkpoint_interval", "potentials", "expectation", "note", "out"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        for req in ("process", "n", "m"):
            if req not in d:
                raise ConfigError(f"config is missing required field {req!r}")
        return cls(
            spec=P.spec_from_dict(d["process"]),
            n=d["n"],
            m=d["m"],
            repetitions=d.get("repetitions", 100),
            master_seed=d.get("master_seed", 0),
            checkpoint_interval=d.get("checkpoint_interval", 0),
            potentials=tuple(pot.potential_from_dict(p) for p in d.get("potentials", [])),
            config_id=d.get("config_id", ""),
            expectation=d.get("expectation"),
            note=d.get("note", ""),
            out=d.get("out"),
        )


def param_value(spec: P.ProcessSpec) -> str:
    label = spec.label()
    return label.split("=", 1)[1] if "=" in label else label


@dataclass
class RunResult:
    repetition: int
    seed: int
    final_gap: float
    runtime_ms: float
    checkpoints: list = field(default_factory=list)  # (t, gap, {potential: value})


def _sample(x: np.ndarray, t: int, potentials) -> tuple[float, dict]:
    n = x.size
    gap = float(x.max()) - t / n
    values = {}
    if potentials:
        view = normalized(LoadState.from_loads(x))
        for p in potentials:
            try:
                values[p.name] = pot.evaluate(p, view)
            except PotentialOverflowError:
                values[p.name] = math.inf
    return gap, values


def run_repetition(config: ExperimentConfig, r: int) -> RunResult:
    rng = RngStream(config.master_seed, r)
    plan = K.kernel_plan(config.spec)
    points = config.checkpoints()
    samples = []
    start = time.perf_counter()
    if plan is not None:
        ks = K.KernelState(plan, config.n, rng.state)
        for cp in points:
            ks.advance(cp - ks.t)
            if len(points) > 1 or config.potentials:
                samples.append((cp,) + _sample(ks.x, cp, config.potentials))
        final = ks.max_load - config.m / config.n
    else:
        state = LoadState(config.n)
        aux = P.make_aux(config.spec, state)
        for cp in points:
            while state.t < cp:
                P.advance(config.spec, state, aux, rng)
            if len(points) > 1 or config.potentials:
                samples.append((cp,) + _sample(state.x, cp, config.potentials))
        final = state.max_load - config.m / config.n
    elapsed = (time.perf_counter() - start) * 1000.0
    return RunResult(r, config.master_seed, float(final), elapsed, samples)


@dataclass
class GapSummary:
    config: ExperimentConfig
    runs: list
    gaps: list
    mean: float
    std: float
    min: float
    max: float
    histogram: dict
    quantiles: dict
    checkpoint_means: list = field(default_factory=list)
    expectation_rate: float | None = None

    @classmethod
    def from_runs(cls, config: ExperimentConfig, runs: list[RunResult]) -> "GapSummary":
        runs = sorted(runs, key=lambda r: r.repetition)
        gaps = [r.final_gap for r in runs]
        arr = np.asarray(gaps, dtype=float)
        counts: dict[int, int] = {}
        for gp in gaps:
            k = round_half_up(gp)
            counts[k] = counts.get(k, 0) + 1
        hist = {k: 100.0 * v / len(gaps) for k, v in sorted(counts.items())}
        means = []
        if runs and runs[0].checkpoints:
            for idx, cp in enumerate(runs[0].checkpoints):
                means.append((cp[0], float(np.mean([r.checkpoints[idx][1] for r in runs]))))
        rate = None
        if config.expectation and "gap_at_least" in config.expectation:
            rate = float(np.mean(arr >= config.expectation["gap_at_least"]))
        return cls(
            config=config,
            runs=runs,
            gaps=gaps,
            mean=float(arr.mean()),
            std=float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
            min=float(arr.min()),
            max=float(arr.max()),
            histogram=hist,
            quantiles={str(q): float(np.quantile(arr, q)) for q in (0.05, 0.5, 0.95)},
            checkpoint_means=means,
            expectation_rate=rate,
        )

    def fraction_rounded_in(self, values: Iterable[int]) -> float:
        allowed = set(values)
        return sum(1 for gp in self.gaps if round_half_up(gp) in allowed) / len(self.gaps)

    def to_dict(self) -> dict[str, Any]:
        d = {
            "config": self.config.to_dict(),
            "mean": self.mean,
            "std": self.std,
            "min": self.min,
            "max": self.max,
            "histogram": {str(k): v for k, v in self.histogram.items()},
            "quantiles": self.quantiles,
            "gaps": self.gaps,
        }
        if self.checkpoint_means:
            d["checkpoint_means"] = [[t, g] for t, g in self.checkpoint_means]
        if self.expectation_rate is not None:
            d["expectation_rate"] = self.expectation_rate
        return d


def default_workers() -> int:
    env = os.environ.get("NBA_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"NBA_WORKERS must be an integer, got {env!r}") from None
    return 1


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> GapSummary:
    """Run all repetitions of ``config``; the result is independent of ``workers``."""
    workers = default_workers() if workers is None else workers
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    if K.kernel_plan(config.spec) is None and config.steps() > 10**7:
        log.warning("%s has no compiled kernel; %d reference steps will be slow",
                    config.config_id, config.steps())
    log.info("running %s (%d x %d balls)", config.config_id, config.repetitions, config.m)
    reps = range(config.repetitions)
    if workers == 1:
        runs = [run_repetition(config, r) for r in reps]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(lambda r: run_repetition(config, r), reps))
    return GapSummary.from_runs(config, runs)


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepRow:
    params: dict
    summary: GapSummary | None
    error: str | None = None

    def to_dict(self) -> dict[str, Any]:
        d = dict(self.params)
        if self.summary is not None:
            d.update(mean_gap=self.summary.mean, std=self.summary.std,
                     repetitions=len(self.summary.gaps))
        if self.error:
            d["error"] = self.error
        return d


def _apply(config: ExperimentConfig, name: str, value) -> ExperimentConfig:
    spec_fields = {f.name for f in dataclasses.fields(config.spec)}
    if name in spec_fields:
        spec = dataclasses.replace(config.spec, **{name: value})
        return dataclasses.replace(config, spec=spec, config_id="")
    if name in {"n", "m", "repetitions", "master_seed"}:
        return dataclasses.replace(config, **{name: value}, config_id="")
    raise ConfigError(f"cannot sweep {name!r}: not a field of {config.spec.process} or of the config")


def sweep(base: ExperimentConfig, grid: dict[str, Sequence], workers: int | None = None) -> list[SweepRow]:
    """One summary per point of the cartesian ``grid``; failing points are recorded, not raised."""
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ConfigError("sweep grid must contain at least one value per parameter")
    names = list(grid)
    rows = []
    for values in itertools.product(*(grid[k] for k in names)):
        params = dict(zip(names, values))
        try:
            cfg = base
            for k, v in params.items():
                cfg = _apply(cfg, k, v)
            rows.append(SweepRow(params, run_experiment(cfg, workers)))
        except (ConfigError, ValueError) as exc:
            log.warning("sweep point %s failed: %s", params, exc)
            rows.append(SweepRow(params, None, str(exc)))
    return rows


# ---------------------------------------------------------------------------
# presets

_SIZES = (10**4, 5 * 10**4, 10**5)
_TABLE3_VALUES = (0, 1, 2, 4, 8, 16)
_BATCH_SIZES = (5, 10, 50, 10**2, 500, 10**3, 5000, 10**4, 5 * 10**4, 10**5, 5 * 10**5)
# Rough single-core throughput of the compiled kernels, used for runtime notes.
_STEPS_PER_SECOND = 3e7


def _eta(cfg: ExperimentConfig) -> str:
    secs = cfg.steps() / _STEPS_PER_SECOND
    return f"about {secs / 60:.1f} core-minutes" if secs >= 60 else f"about {secs:.0f} core-seconds"


def _cfg(spec, n, m, reps=100, cid="", **kw) -> ExperimentConfig:
    cfg = ExperimentConfig(spec=spec, n=n, m=m, repetitions=reps, config_id=cid, **kw)
    if not cfg.note:
        cfg = dataclasses.replace(cfg, note=f"expected runtime {_eta(cfg)}")
    return cfg


def _sigma_spec(sigma: float) -> P.ProcessSpec:
    # sigma = 0 means exact loads, i.e. Two-Choice.
    return P.TwoChoice() if sigma == 0 else P.SigmaNoisyLoad(float(sigma))


def _table3(sizes=_SIZES, reps=100, factor=1000) -> list[ExperimentConfig]:
    out = []
    for n in sizes:
        for v in _TABLE3_VALUES:
            for tag, spec in (("g_bounded", P.GBounded(v)), ("g_myopic_comp", P.GMyopicComp(v)),
                              ("sigma_noisy_load", _sigma_spec(v))):
                out.append(_cfg(spec, n, factor * n, reps, f"table3/{tag}/{v}/n={n}"))
    return out


def _table4(n=10**4, reps=100, factor=1000) -> list[ExperimentConfig]:
    out = [_cfg(P.BBatch(b), n, factor * n, reps, f"table4/b_batch/{b}/n={n}") for b in _BATCH_SIZES]
    out += [_cfg(P.OneChoice(), n, b, reps, f"table4/one_choice/m={b}/n={n}") for b in _BATCH_SIZES]
    return out


def _fig7(sizes=_SIZES, reps=100) -> list[ExperimentConfig]:
    out = []
    for n in sizes:
        for v in range(1, 21):
            out.append(_cfg(P.GBounded(v), n, 1000 * n, reps, f"fig7/g_bounded/{v}/n={n}"))
            out.append(_cfg(P.GMyopicComp(v), n, 1000 * n, reps, f"fig7/g_myopic_comp/{v}/n={n}"))
            out.append(_cfg(P.SigmaNoisyLoad(float(v)), n, 1000 * n, reps, f"fig7/sigma_noisy_load/{v}/n={n}"))
    return out


def _lower_bounds(n=10**4, reps=100) -> list[ExperimentConfig]:
    g = 16
    log_n = math.log(n)
    sigma = 32.0
    sig_bound = min(0.5 * sigma**0.8, sigma**0.4 * math.sqrt(log_n) / 30.0)
    return [
        _cfg(P.GMyopicComp(g), n, n * g // 2, reps, f"lower_bounds/g_myopic_comp/{g}/m=ng/2",
             expectation={"gap_at_least": g / 35}),
        _cfg(P.TwoChoice(), n, n, reps, "lower_bounds/two_choice/m=n",
             note="reference for the log2 log n - O(1) lower bound of any g-Adv-Comp instance at m = n"),
        _cfg(P.GAdvComp(4, "greedy_max"), n, n, reps, "lower_bounds/g_adv_comp/4/m=n",
             note="majorizes Two-Choice; mean gap should not fall below the two_choice/m=n row"),
        _cfg(P.SigmaNoisyLoad(1.0), n, n, reps, "lower_bounds/sigma_noisy_load/1/m=n",
             expectation={"gap_at_least": min(log_n ** (1 / 3) / 8, 0.5 * 1.0 * log_n ** (1 / 3))}),
        _cfg(P.SigmaNoisyLoad(sigma), n, int(0.5 * sigma**0.8 * n), reps,
             "lower_bounds/sigma_noisy_load/32/m=sigma^0.8 n/2", expectation={"gap_at_least": sig_bound}),
        _cfg(P.BBatch(10 * n), n, 10 * n, reps, "lower_bounds/b_batch/first_batch",
             note="the first batch sees an all-zero snapshot, so it is One-Choice in distribution"),
        _cfg(P.OneChoice(), n, 10 * n, reps, "lower_bounds/one_choice/m=b"),
    ]


def _scaled_desk() -> list[ExperimentConfig]:
    out = _table3(sizes=(10**4,)) + _table4()
    out += [dataclasses.replace(c, n=10**3, m=100 * 10**3, repetitions=10,
                                config_id=c.config_id.replace("n=10000", "n=1000") + "/smoke", note="")
            for c in _table3(sizes=(10**4,))[:6]]
    return [dataclasses.replace(c, note=c.note or f"expected runtime {_eta(c)}") for c in out]


PRESETS = {
    "table3": _table3,
    "table4": _table4,
    "fig7": _fig7,
    "fig8": _table4,
    "lower_bounds": _lower_bounds,
    "scaled_desk": _scaled_desk,
}


def preset(name: str) -> list[ExperimentConfig]:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return PRESETS[name]()


def load_configs(data) -> list[ExperimentConfig]:
    """Configs from parsed JSON: one object, a list, or ``{"experiments": [...]}``."""
    if isinstance(data, dict) and "experiments" in data:
        data = data["experiments"]
    if isinstance(data, dict):
        data = [data]
    if not isinstance(data, list) or not data:
        raise ConfigError("config must be an experiment object or a non-empty list of them")
    return [ExperimentConfig.from_dict(d) for d in data]


# ---------------------------------------------------------------------------
# many tiny runs


def monte_carlo_pmf(spec: P.ProcessSpec, n: int, m: int, runs: int, seed: int = 0) -> dict:
    """Empirical gap distribution of ``runs`` short runs (exact fraction keys)."""
    rng = RngStream(seed, 0)
    if K.kernel_plan(spec) is not None:
        maxima = K.sample_max_loads(spec, n, m, runs, rng.state)
    else:
        maxima = np.array([P.simulate(spec, n, m, rng).max_load for _ in range(runs)])
    values, counts = np.unique(maxima, return_counts=True)
    return {Fraction(int(v) * n - m, n): c / runs for v, c in zip(values, counts)}


# ---------------------------------------------------------------------------
# output


def _fmt(x: float) -> str:
    return repr(float(x))


def write_runs_csv(path, summaries: Iterable[GapSummary], timing: bool = True) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUN_COLUMNS)
        for s in summaries:
            c = s.config
            for r in s.runs:
                w.writerow([c.config_id, c.spec.process, param_value(c.spec), c.n, c.m, r.repetition,
                            r.seed, _fmt(r.final_gap), round_half_up(r.final_gap),
                            f"{r.runtime_ms:.3f}" if timing else ""])


def write_checkpoints_csv(path, summaries: Iterable[GapSummary]) -> bool:
    rows = []
    for s in summaries:
        for r in s.runs:
            for t, gp, values in r.checkpoints:
                if values:
                    rows += [[s.config.config_id, r.repetition, t, _fmt(gp), k, _fmt(v)] for k, v in values.items()]
                else:
                    rows.append([s.config.config_id, r.repetition, t, _fmt(gp), "", ""])
    if not rows:
        return False
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CHECKPOINT_COLUMNS)
        w.writerows(rows)
    return True


def write_summary_json(path, summaries: Iterable[GapSummary]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([s.to_dict() for s in summaries], fh, indent=2)
        fh.write("\n")
