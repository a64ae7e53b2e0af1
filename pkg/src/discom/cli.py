"""Command-line experiment runner.

Subcommands::

    discom run    --config cfg.yaml [--output DIR] [--seed N] [--jobs K]
    discom sweep  --config cfg.yaml [--output DIR] [--jobs K]
    discom replay --config cfg.yaml --log events.csv [--output DIR]
    discom check  [--quick] [--only 2,3,...]

``run`` executes the base config once per seed and ignores any sweep block;
``sweep`` executes every sweep point for every seed. The output directory is
taken from ``--output``, else ``$DISCOM_OUTPUT``, else the config's ``output``.

Files written per (sweep point, seed)::

    trace_<point>_seed<seed>.jsonl    one slot record per line
    metrics_<point>_seed<seed>.csv    columns: point, seed, then METRIC_COLUMNS

and once per experiment ``aggregate.csv`` with, per (point, CA), the seed
mean and standard error of every numeric metric plus ``regret_exponent``
when the horizon axis has at least three values.

Exit status: 0 when every run finished and every run satisfied the
exploration bounds and slot conservation; 1 when a run broke an invariant or
crashed; 2 for an invalid config.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .config import ExperimentSpec, apply_point, load_yaml, point_label, validate_config
from .core import ConfigError
from .metrics import (
    METRIC_COLUMNS,
    conservation_holds,
    exploration_bound_violations,
    fit_regret_exponent,
    summary_rows,
    write_table,
)
from .netsim import run, write_trace

OUTPUT_ENV = "DISCOM_OUTPUT"
RUN_COLUMNS = ("point", "seed") + METRIC_COLUMNS
AGG_METRICS = ("regret", "avg_regret", "ctr", "ctr_high_type", "exploit_pct", "explore_pct", "train_pct",
               "messages_query", "messages_request", "messages_relay")


def _run_one(spec: ExperimentSpec, point: dict, seed: int, out: Path) -> tuple[list[dict], list[str], list[Path]]:
    label = point_label(point)
    cfg = spec.config_at(point, seed)
    trace = run(cfg)
    problems = []
    bad = exploration_bound_violations(trace)
    if bad:
        problems.append(f"{label} seed {seed}: {len(bad)} exploration-bound violations, first {bad[0]}")
    if not conservation_holds(trace):
        problems.append(f"{label} seed {seed}: phase counts do not sum to the horizon")
    rows = [{"point": label, "seed": seed, **r} for r in summary_rows(trace)]
    trace_path = out / f"trace_{label}_seed{seed}.jsonl"
    metrics_path = out / f"metrics_{label}_seed{seed}.csv"
    write_trace(trace, trace_path)
    write_table(metrics_path, rows, RUN_COLUMNS)
    return rows, problems, [trace_path, metrics_path]


def aggregate(spec: ExperimentSpec, rows: list[dict]) -> tuple[list[dict], list[str]]:
    """Seed means and standard errors per (point, CA), plus the fitted exponent."""
    points = spec.points() or [{}]
    by_key: dict[tuple[str, int], list[dict]] = {}
    for r in rows:
        by_key.setdefault((r["point"], r["ca"]), []).append(r)
    out = []
    for point in points:
        label = point_label(point)
        for ca in sorted({ca for (p, ca) in by_key if p == label}):
            group = by_key[(label, ca)]
            row: dict = {"point": label, **point, "ca": ca, "algorithm": group[0]["algorithm"],
                         "horizon": group[0]["horizon"], "n_seeds": len(group)}
            for k in AGG_METRICS:
                vals = np.array([g[k] for g in group if g[k] is not None], dtype=float)
                row[f"{k}_mean"] = float(vals.mean()) if vals.size else None
                row[f"{k}_se"] = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else None
            out.append(row)
    horizons = spec.sweep.get("horizon", [])
    if len(horizons) >= 3:
        groups: dict[tuple, list[dict]] = {}
        for row in out:
            key = tuple((a, row[a]) for a in spec.sweep if a != "horizon") + (("ca", row["ca"]),)
            groups.setdefault(key, []).append(row)
        for group in groups.values():
            group.sort(key=lambda r: r["horizon"])
            slope = fit_regret_exponent([r["horizon"] for r in group], [r["regret_mean"] for r in group])
            for r in group:
                r["regret_exponent"] = slope
    columns = ["point", *[a for a in spec.sweep], "ca", "algorithm", "horizon", "n_seeds"]
    columns += [f"{k}_{s}" for k in AGG_METRICS for s in ("mean", "se")]
    if len(horizons) >= 3:
        columns.append("regret_exponent")
    return out, columns


def run_experiment(spec: ExperimentSpec, out: Path | str, jobs: int = 1,
                   log: Callable[[str], None] = print) -> int:
    """Execute every (point, seed) run, write per-run files and the aggregate table."""
    out = Path(out)
    points = spec.points() or [{}]
    for point in points:
        for seed in spec.seeds:
            errors = [d for d in validate_config(apply_point(spec.base, point, seed)) if d.level == "error"]
            if errors:
                for d in errors:
                    log(str(d))
                return 2
    for d in validate_config(apply_point(spec.base, points[0], spec.seeds[0])):
        log(str(d))
    tasks = [(p, s) for p in points for s in spec.seeds]
    log(f"{len(points)} sweep point(s) x {len(spec.seeds)} seed(s) = {len(tasks)} run(s) -> {out}")

    created_dir = not out.exists()
    out.mkdir(parents=True, exist_ok=True)
    rows: list[dict] = []
    problems: list[str] = []
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = [pool.submit(_run_one, spec, p, s, out) for p, s in tasks]
                results = [f.result() for f in futures]
        else:
            results = [_run_one(spec, p, s, out) for p, s in tasks]
        for r, pr, _files in results:
            rows.extend(r)
            problems.extend(pr)
        agg, columns = aggregate(spec, rows)
        agg_path = out / "aggregate.csv"
        write_table(agg_path, agg, columns)
    except (ConfigError, ValueError, OSError) as e:
        log(f"error: {e}")
        for p in out.glob("trace_*_seed*.jsonl"):
            p.unlink()
        for p in [*out.glob("metrics_*_seed*.csv"), out / "aggregate.csv"]:
            if p.exists():
                p.unlink()
        if created_dir and not any(out.iterdir()):
            out.rmdir()
        return 1
    for p in problems:
        log(f"invariant violated: {p}")
    return 1 if problems else 0


def _output_dir(args: argparse.Namespace, spec: ExperimentSpec) -> Path:
    return Path(args.output or os.environ.get(OUTPUT_ENV) or spec.output)


def _load_spec(args: argparse.Namespace, sweep: bool) -> ExperimentSpec:
    raw = load_yaml(args.config)
    if getattr(args, "seed", None) is not None:
        raw["seeds"] = [args.seed]
    if not sweep:
        raw.pop("sweep", None)
    return ExperimentSpec.from_dict(raw)


def _cmd_run(args: argparse.Namespace, sweep: bool) -> int:
    try:
        spec = _load_spec(args, sweep)
    except (ConfigError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return run_experiment(spec, _output_dir(args, spec), jobs=args.jobs)


def _cmd_replay(args: argparse.Namespace) -> int:
    from .config import sim_config_from_dict
    from .replay import read_event_log, replay

    try:
        raw = load_yaml(args.config)
        if args.seed is not None:
            raw["seed"] = args.seed
        raw.pop("sweep", None)
        raw.pop("seeds", None)
        raw.pop("output", None)
        cfg = sim_config_from_dict(raw)
        events = read_event_log(args.log)
        report = replay(events, cfg)
    except (ConfigError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    ctr = "absent" if report.ctr is None else f"{report.ctr:.6f}"
    print(f"rows {report.rows} matched {report.matched} match_rate {report.match_rate:.6f} ctr {ctr}")
    out = args.output or os.environ.get(OUTPUT_ENV)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        rows = [{"ca": i, **v} for i, v in report.per_ca.items()]
        rows.append({"ca": "all", "rows": report.rows, "matched": report.matched, "ctr": report.ctr})
        write_table(Path(out) / "replay.csv", rows, ("ca", "rows", "matched", "ctr"))
    return 0


def _cmd_check(args: argparse.Namespace) -> int:
    from .acceptance import AcceptanceSuite

    only = {int(v) for v in args.only.split(",")} if args.only else None
    suite = AcceptanceSuite(seed_scale=0.25 if args.quick else 1.0, log=print)
    results = suite.run_all(only)
    print(f"{sum(r.passed for r in results)}/{len(results)} criteria passed")
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="discom", description="Cooperative contextual bandit experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run the base config for each seed"), ("sweep", "run every sweep point")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="YAML config file")
        p.add_argument("--output", help=f"output directory (default ${OUTPUT_ENV} or the config's output)")
        p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
        p.add_argument("--seed", type=int, help="override the seed list with this one seed")
    p = sub.add_parser("replay", help="evaluate the configured policy on a logged event file")
    p.add_argument("--config", required=True)
    p.add_argument("--log", required=True, help="CSV with columns t,ca,x_1..x_d,content,reward")
    p.add_argument("--output")
    p.add_argument("--seed", type=int)
    p = sub.add_parser("check", help="run the acceptance suite")
    p.add_argument("--quick", action="store_true", help="use a quarter of the seeds")
    p.add_argument("--only", help="comma-separated criterion numbers")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command in ("run", "sweep"):
        return _cmd_run(args, sweep=args.command == "sweep")
    if args.command == "replay":
        return _cmd_replay(args)
    return _cmd_check(args)


if __name__ == "__main__":
    sys.exit(main())
