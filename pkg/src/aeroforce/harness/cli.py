"""Command line entry point.

    aeroforce run <config.toml>
    aeroforce preset <A|B|C|D|E|F>
    aeroforce batch <config.toml> --seeds N --jobs K
    aeroforce metrics <log.csv>

``--check`` makes the exit status nonzero on a simulation fault or, for
presets, on any failed threshold.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
import time
from pathlib import Path

from .batch import aggregate_table, run_many, seeded, trial_table
from .config import ConfigError, load_config, replace_rates
from .metrics import MetricsError, summarize
from .presets import PRESETS, run_preset
from .runner import RunLog, run_scenario

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


def _json_default(x):
    try:
        return float(x)
    except (TypeError, ValueError):
        return str(x)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default)


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.5g}"
    return str(v)


def _print_summary(name, log):
    status = f"FAULT {log.fault}" if log.fault else "ok"
    print(f"{name}: {len(log)} ticks, {status}")
    if len(log):
        for k, v in summarize(log).as_dict().items():
            print(f"  {k:14s} {_fmt(v)}")


def _transform(args):
    if args.dt_physics is None and args.dt_control is None:
        return None
    return lambda c: replace_rates(c, args.dt_physics, args.dt_control)


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    tf = _transform(args)
    return tf(cfg) if tf else cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    t0 = time.perf_counter()
    log = run_scenario(cfg)
    _print_summary(cfg.name, log)
    print(f"  wall time      {time.perf_counter() - t0:.2f} s")
    if args.out:
        path = log.write(Path(args.out) / f"{cfg.name}.csv")
        print(f"wrote {path}")
    return EXIT_CHECK if args.check and log.fault else EXIT_OK


def cmd_preset(args) -> int:
    t0 = time.perf_counter()
    res = run_preset(args.key, seed=args.seed or 0, jobs=args.jobs, transform=_transform(args))
    elapsed = time.perf_counter() - t0
    print(f"preset {res.key}: {PRESETS[res.key].title} ({len(res.logs)} runs, {elapsed:.1f} s)")
    for c in res.checks:
        print("  " + c.line())
    if args.out:
        out = Path(args.out) / f"preset_{res.key}"
        for cfg, log in zip(res.configs, res.logs):
            log.write(out / f"{cfg.name}.csv")
        report = {"preset": res.key, "passed": res.passed, "wall_time": elapsed,
                  "checks": [c.__dict__ for c in res.checks], "metrics": res.metrics}
        (out / "report.json").write_text(_dump(report) + "\n")
        print(f"wrote {out}")
    return EXIT_CHECK if args.check and not res.passed else EXIT_OK


def _write_rows(path: Path, rows):
    keys = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, keys, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def cmd_batch(args) -> int:
    cfg = _load(args)
    seeds = range(cfg.seed, cfg.seed + args.seeds)
    cfgs = seeded(cfg, seeds)
    t0 = time.perf_counter()
    logs = run_many(cfgs, args.jobs)
    rows = trial_table(logs)
    agg = aggregate_table(rows)
    print(f"batch {cfg.name}: {len(logs)} seeds, {time.perf_counter() - t0:.1f} s")
    for row in rows:
        print("  " + "  ".join(f"{k}={_fmt(v)}" for k, v in row.items()))
    print("aggregate (mean / std / min / median / max):")
    for k, a in agg.items():
        print(f"  {k:14s} {_fmt(a['mean'])} / {_fmt(a['std'])} / {_fmt(a['minimum'])} / "
              f"{_fmt(a['median'])} / {_fmt(a['maximum'])}")
    if args.out:
        out = Path(args.out) / f"batch_{cfg.name}"
        out.mkdir(parents=True, exist_ok=True)
        for c, log in zip(cfgs, logs):
            log.write(out / f"{c.name}.csv")
        _write_rows(out / "trials.csv", rows)
        (out / "aggregate.json").write_text(_dump(agg) + "\n")
        print(f"wrote {out}")
    faulted = any(log.fault for log in logs)
    return EXIT_CHECK if args.check and faulted else EXIT_OK


def cmd_metrics(args) -> int:
    log = RunLog.read(args.log)
    name = log.meta.get("name", Path(args.log).stem)
    if args.json:
        print(_dump({"name": name, "fault": log.fault, **summarize(log).as_dict()}))
    else:
        _print_summary(name, log)
    return EXIT_CHECK if args.check and log.fault else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", metavar="DIR", help="write logs and reports under DIR")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--dt-physics", type=float, default=None, metavar="S", help="physics step [s]")
    common.add_argument("--dt-control", type=float, default=None, metavar="S", help="control period [s]")
    common.add_argument("--check", action="store_true",
                        help="exit nonzero on a simulation fault or a failed threshold")

    ap = argparse.ArgumentParser(prog="aeroforce", description="Aerial force-control simulation harness.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run one scenario config")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("preset", parents=[common], help="run an experiment preset with its checks")
    p.add_argument("key", type=str.upper, choices=sorted(PRESETS))
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("batch", parents=[common], help="run a config over consecutive seeds")
    p.add_argument("config")
    p.add_argument("--seeds", type=int, default=10, help="number of seeds (default 10)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("metrics", help="summarize a run log")
    p.add_argument("log")
    p.add_argument("--json", action="store_true", help="print JSON instead of a table")
    p.add_argument("--check", action="store_true", help="exit nonzero if the run recorded a fault")
    p.set_defaults(func=cmd_metrics)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "seeds", 1) < 1 or getattr(args, "jobs", 1) < 1:
        ap.error("--seeds and --jobs must be positive")
    try:
        return args.func(args)
    except (ConfigError, MetricsError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
