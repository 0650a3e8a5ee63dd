"""Command-line entry point: ``shopfloor <command> [flags]``.

Exit status is 0 on success, 1 for usage or validation errors and 2 for
failures while running.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .config import Config, ConfigError, default_config, load_config
from .harness import (
    DEPARTMENT_KEY, PRESETS, ExperimentPlan, Factor, ReplicationError, analyze, apply_overrides,
    export_csv, preset, read_csv, run_once, run_replications,
)
from .satisfaction import scenario_for, scenario_to_dict

SEED_ENV = "SHOPFLOOR_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # exit 1 instead of argparse's 2
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _parse_set(items: Sequence[str]) -> dict[str, Any]:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = _parse_value(value.strip())
    return out


def _seed(args) -> int | None:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return None


def _overrides(args) -> dict[str, Any]:
    """Flags translated to their config-file keys (flags win over the file)."""
    ov: dict[str, Any] = {}
    if getattr(args, "dept", None) and args.command not in ("preset",):
        ov[DEPARTMENT_KEY] = args.dept
    seed = _seed(args)
    if seed is not None:
        ov["run.base_seed"] = seed
    if getattr(args, "reps", None) is not None:
        ov["run.replications"] = args.reps
    if getattr(args, "weeks", None) is not None:
        ov["run.weeks"] = args.weeks
    if args.command != "preset" and getattr(args, "scenario", None) is not None:
        ov["run.weight_scenario"] = scenario_to_dict(scenario_for(args.scenario, args.level or 1))
    ov.update(_parse_set(getattr(args, "set", None) or []))
    return ov


def _merged_config(args) -> Config:
    cfg = load_config(args.config) if args.config else default_config()
    ov = _overrides(args)
    dept = ov.pop(DEPARTMENT_KEY, None)
    if dept is not None:
        cfg = apply_overrides(cfg, {DEPARTMENT_KEY: dept})
    return cfg.with_overrides(ov) if ov else cfg


def _summary(rs) -> None:
    for lbl in rs.labels:
        recs = [r for r in rs.ordered() if r.label == lbl]
        tx = sum(r.metrics.transactions for r in recs) / len(recs)
        sat = sum(r.metrics.overall_satisfaction for r in recs) / len(recs)
        print(f"{lbl}: n={len(recs)} mean transactions={tx:.2f} mean satisfaction={sat:.2f}")


def _finish(rs, args) -> None:
    _summary(rs)
    if args.out:
        export_csv(rs, args.out)
        print(f"wrote {len(rs)} rows to {args.out}")


def _progress(done: int, total: int) -> None:
    if done == total or done % 20 == 0:
        print(f"  {done}/{total} runs", flush=True)


def cmd_run(args) -> int:
    cfg = _merged_config(args)
    plan = ExperimentPlan("run", cfg, (), cfg.run.replications, cfg.run.base_seed, tuple(args.dv or ()) or
                          ("transactions", "satisfied_count", "overall_satisfaction"))
    if args.trace:
        from .engine import derive_seed
        with open(args.trace, "w") as fh:
            run_once(cfg, derive_seed(plan.base_seed, 0, 0), trace=fh)
        print(f"trace of condition 0, rep 0 written to {args.trace}")
    _finish(run_replications(plan, args.jobs, progress=_progress), args)
    return 0


def cmd_sweep(args) -> int:
    cfg = _merged_config(args)
    values = [_parse_value(v) for v in args.values.split(",")]
    factor = Factor.sweep(args.name or args.param.split(".")[-1], args.param, values)
    plan = ExperimentPlan("sweep", cfg, (factor,), cfg.run.replications, cfg.run.base_seed,
                          tuple(args.dv or ()) or ("transactions", "satisfied_count", "overall_satisfaction"))
    _finish(run_replications(plan, args.jobs, progress=_progress), args)
    return 0


def cmd_preset(args) -> int:
    seed = _seed(args)
    kwargs: dict[str, Any] = {"department": args.dept or "atv", "scenario": args.scenario or 2,
                              "level": args.level}
    if args.reps is not None:
        kwargs["replications"] = args.reps
    if seed is not None:
        kwargs["base_seed"] = seed
    plan = preset(args.name, **kwargs)
    ov = _parse_set(args.set or [])
    if args.weeks is not None:
        ov["run.weeks"] = args.weeks
    if ov:
        plan = replace(plan, base=plan.base.with_overrides(ov))
    rs = run_replications(plan, args.jobs, progress=_progress)
    _finish(rs, args)
    if args.analysis:
        Path(args.analysis).write_text(json.dumps(analyze(rs), indent=2, sort_keys=True) + "\n")
        print(f"analysis written to {args.analysis}")
    return 0


def cmd_analyze(args) -> int:
    rs = read_csv(args.csv)
    report = analyze(rs, args.dv or None, args.alpha)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"analysis written to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_validate(args) -> int:
    cfg = load_config(args.file)
    print(f"{args.file}: ok (digest {cfg.digest()})")
    return 0


def cmd_trace(args) -> int:
    cfg = _merged_config(args)
    from .engine import derive_seed
    seed = derive_seed(cfg.run.base_seed, 0, args.rep)
    if args.out:
        with open(args.out, "w") as fh:
            m = run_once(cfg, seed, trace=fh)
    else:
        m = run_once(cfg, seed, trace=sys.stdout)
    print(json.dumps(m.as_dict(), sort_keys=True), file=sys.stderr)
    return 0


def _config_flags(p: argparse.ArgumentParser, config: bool = True) -> None:
    if config:
        p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--dept", choices=["atv", "ww", "both"] if not config else ["atv", "ww"],
                   help="built-in department profile")
    p.add_argument("--seed", type=int, help=f"base seed (falls back to ${SEED_ENV})")
    p.add_argument("--reps", type=int, help="replications per condition")
    p.add_argument("--weeks", type=int, help="simulated weeks per run")
    p.add_argument("--scenario", type=int, choices=[1, 2, 3], help="satisfaction weight scenario")
    p.add_argument("--level", type=int, choices=[1, 2, 3], help="weight scenario level")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config value by dotted path, e.g. practice.p_learn=0.5")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="shopfloor", description="Retail department staffing and practice simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="replications of one configuration")
    _config_flags(p)
    p.add_argument("--out", help="results CSV")
    p.add_argument("--trace", help="write the event trace of the first replication here")
    p.add_argument("--dv", action="append", help="dependent variable recorded in metadata")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="sweep one config parameter")
    _config_flags(p)
    p.add_argument("--param", required=True, help="dotted config path, e.g. staffing.cashiers")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--name", help="factor name used in condition labels")
    p.add_argument("--out", help="results CSV")
    p.add_argument("--dv", action="append")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("preset", help="run a named experiment")
    p.add_argument("name", choices=PRESETS)
    _config_flags(p, config=False)
    p.add_argument("--out", help="results CSV")
    p.add_argument("--analysis", help="also write the JSON analysis report here")
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("analyze", help="statistics for a results CSV")
    p.add_argument("csv")
    p.add_argument("--dv", action="append", help="dependent variable (repeatable)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", help="JSON report path (stdout if omitted)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("validate-config", help="check a configuration file")
    p.add_argument("file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("trace", help="one replication with the event trace")
    _config_flags(p)
    p.add_argument("--rep", type=int, default=0, help="replication index for the stream")
    p.add_argument("--out", help="trace file (stdout if omitted)")
    p.set_defaults(func=cmd_trace)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ReplicationError, OSError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
