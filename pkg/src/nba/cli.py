"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 runtime or resource error,
4 internal assertion, 5 at least one inequality violation.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

from . import harness as H
from . import potentials as pot
from . import verify as V
from .errors import ConfigError, ContractViolation, NBAError, ParameterError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_ASSERT = 4
EXIT_VIOLATION = 5

log = logging.getLogger("nba")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2 already; keep the message on stderr
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--workers", type=int, help="worker threads (default: $NBA_WORKERS or 1)")

    p = _Parser(prog="nba", description="Balls-into-bins simulation and potential-function verification.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", parents=[common], help="run experiments from a config or preset")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="JSON experiment config")
    src.add_argument("--preset", help=f"preset name ({', '.join(H.PRESETS)})")
    run.add_argument("--n", type=int, help="override the bin count")
    run.add_argument("--m", type=int, help="override the ball count")
    run.add_argument("--trials", type=int, help="override the repetition count")
    run.add_argument("--g", type=int, help="override the process parameter g")
    run.add_argument("--no-timing", action="store_true", help="leave runtime_ms empty (byte-stable output)")

    sw = sub.add_parser("sweep", parents=[common], help="sweep one parameter of a base config")
    sw.add_argument("--config", required=True, help="JSON with 'base' config and 'grid' {param: [values]}")
    sw.add_argument("--trials", type=int, help="override the repetition count")

    pr = sub.add_parser("preset", parents=[common], help="print a preset as JSON")
    pr.add_argument("name", nargs="?", help="preset name; omit to list presets")

    ve = sub.add_parser("verify", parents=[common], help="run the drop-inequality suites")
    ve.add_argument("--suite", default=",".join(V.SUITES), help="comma-separated suites")
    ve.add_argument("--trials", type=int, default=10_000)
    ve.add_argument("--negative-control", action="store_true", help="drop preconditions; must report violations")

    co = sub.add_parser("constants", parents=[common], help="print the constants ledger and layer plan")
    co.add_argument("--g", type=int, required=True)
    co.add_argument("--n", type=int, required=True)
    return p


def _workers(args) -> int:
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError(f"--workers must be >= 1, got {args.workers}")
        return args.workers
    return H.default_workers()


def _read_json(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def _out_dir(args, default: str | None) -> Path:
    out = Path(args.out or default or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(obj, args, filename: str) -> None:
    text = json.dumps(obj, indent=2)
    if args.out:
        path = _out_dir(args, None) / filename
        path.write_text(text + "\n", encoding="utf-8")
    print(text)


def _override(cfg: H.ExperimentConfig, args) -> H.ExperimentConfig:
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if getattr(args, "n", None) is not None:
        changes["n"] = args.n
    if getattr(args, "m", None) is not None:
        changes["m"] = args.m
    if getattr(args, "trials", None) is not None:
        changes["repetitions"] = args.trials
    if getattr(args, "g", None) is not None:
        if not hasattr(cfg.spec, "g"):
            raise ConfigError(f"--g does not apply to {cfg.spec.process}")
        changes["spec"] = dataclasses.replace(cfg.spec, g=args.g)
    if not changes:
        return cfg
    try:
        return dataclasses.replace(cfg, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def cmd_run(args) -> int:
    configs = H.load_configs(_read_json(args.config)) if args.config else H.preset(args.preset)
    configs = [_override(c, args) for c in configs]
    workers = _workers(args)
    out = _out_dir(args, configs[0].out)
    summaries = [H.run_experiment(c, workers) for c in configs]
    H.write_summary_json(out / "summary.json", summaries)
    H.write_runs_csv(out / "runs.csv", summaries, timing=not args.no_timing)
    H.write_checkpoints_csv(out / "checkpoints.csv", summaries)
    for s in summaries:
        print(f"{s.config.config_id}: mean gap {s.mean:.3f} (std {s.std:.3f}, {len(s.gaps)} runs)")
    return EXIT_OK


def cmd_sweep(args) -> int:
    data = _read_json(args.config)
    if not isinstance(data, dict) or "base" not in data or "grid" not in data:
        raise ConfigError("sweep config needs 'base' and 'grid' fields")
    base = _override(H.ExperimentConfig.from_dict(data["base"]), args)
    if not isinstance(data["grid"], dict):
        raise ConfigError("'grid' must map parameter names to value lists")
    rows = H.sweep(base, data["grid"], _workers(args))
    out = _out_dir(args, base.out)
    H.write_runs_csv(out / "runs.csv", [r.summary for r in rows if r.summary is not None])
    (out / "sweep.json").write_text(json.dumps([r.to_dict() for r in rows], indent=2) + "\n", encoding="utf-8")
    for r in rows:
        print(json.dumps(r.to_dict()))
    return EXIT_OK


def cmd_preset(args) -> int:
    if not args.name:
        print("\n".join(H.PRESETS))
        return EXIT_OK
    _emit([c.to_dict() for c in H.preset(args.name)], args, f"{args.name}.json")
    return EXIT_OK


def cmd_verify(args) -> int:
    suites = [s.strip() for s in args.suite.split(",") if s.strip()]
    if not suites:
        raise ConfigError("--suite is empty")
    unknown = [s for s in suites if s not in V.SUITES]
    if unknown:
        raise ConfigError(f"unknown suite(s) {unknown}; available: {', '.join(V.SUITES)}")
    if args.trials < 1:
        raise ConfigError(f"--trials must be >= 1, got {args.trials}")
    reports = V.run_all(suites, args.trials, args.seed or 0, args.negative_control)
    _emit([r.to_dict() for r in reports], args, "verify.json")
    return EXIT_VIOLATION if any(r.violations for r in reports) else EXIT_OK


def cmd_constants(args) -> int:
    if args.g < 1:
        raise ConfigError(f"--g must be >= 1, got {args.g}")
    if args.n < 2:
        raise ConfigError(f"--n must be >= 2, got {args.n}")
    ledger = pot.constants(args.g, args.n)
    out = {"constants": ledger.to_dict()}
    a = ledger.alpha1 * math.log(args.n)
    if args.g <= 1:
        out["layer_plan"] = None
        out["layer_plan_note"] = "requires g > 1"
    else:
        try:
            out["layer_plan"] = pot.layer_plan(args.g, args.n).to_dict()
        except ParameterError as exc:
            out["layer_plan"] = None
            out["layer_plan_note"] = f"{exc} (alpha1*log n = {a:.6g})"
    ell = pot.ell_lower_bound(args.g, args.n) if args.g > 1 else None
    if ell is not None:
        out["ell_lower_bound"] = {"value": ell.value, "in_range": ell.in_range, "g_max": ell.g_max}
    _emit(out, args, "constants.json")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "preset": cmd_preset,
            "verify": cmd_verify, "constants": cmd_constants}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ParameterError, ContractViolation) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssertionError as exc:
        print(f"internal assertion failed: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    except (NBAError, RuntimeError, ArithmeticError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
