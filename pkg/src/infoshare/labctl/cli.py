"""Command-line entry point: run, sweep, calibrate, validate, plot, verify."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from ..netgrid import build_grid, dump_adjacency, validate_graph
from ..telemetry import dump_snapshots_csv
from . import outputs
from .calibrate import HIGH_SLOPE_THRESHOLD, CalibrationError, calibrate_congestion
from .config import ConfigError, ScenarioConfig, from_dict, load_config, load_defaults, load_manifest
from .runner import aggregate, run_scenario, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_ACCEPTANCE = 0, 1, 2, 3

log = logging.getLogger("infoshare")


def _overrides(pairs: list[str]) -> dict:
    """``key=value`` pairs (values parsed as YAML); ``grid.rows=3`` style keys nest."""
    out: dict = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigError([f"override {item!r} is not key=value"])
        key, raw = item.split("=", 1)
        val = yaml.safe_load(raw)
        if key.startswith("grid."):
            out.setdefault("grid", {})[key[5:]] = val
        else:
            out[key] = val
    return out


def _config(args) -> ScenarioConfig:
    over = _overrides(args.set)
    if args.config:
        return load_config(args.config, over)
    return from_dict(over, load_defaults())


def cmd_run(args) -> int:
    cfg = _config(args).validate()
    res = run_scenario(cfg, keep_trace=True, keep_snapshots=args.dump_snapshots)
    written = outputs.emit_outputs([res], args.out, traces=args.trace)
    if args.dump_snapshots:
        dump_snapshots_csv(res.snapshots, Path(args.out) / "snapshots.csv")
    print(outputs.results_csv([res.row]), end="")
    log.info("wrote %d files to %s", len(written), args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    plan = load_manifest(args.manifest)
    problems = [f"{c.label}: {p}" for c in plan for p in c.problems()]
    if problems:
        raise ConfigError(problems)
    results = run_sweep(plan, jobs=args.jobs, keep_traces=args.traces)
    outputs.emit_outputs(results, args.out, traces=args.traces, summary=aggregate(results))
    failed = sum(r.row.status.startswith("failed") for r in results)
    print(f"{len(results)} scenarios, {failed} failed -> {args.out}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _config(args).validate()
    seeds = [int(s) for s in args.seeds.split(",")]
    cal = calibrate_congestion(cfg, args.regime, seeds=seeds, quorum=args.quorum, threshold=args.threshold)
    for lam, outcome in sorted(cal.tested.items()):
        print(f"  tested lambda={lam:g}: {outcome}")
    print(f"{cal.regime} regime lambda_mean_veh_per_h = {cal.lambda_mean:g}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _config(args)
    problems = cfg.problems()
    if problems:
        raise ConfigError(problems)
    g = build_grid(cfg.grid)
    defects = validate_graph(g)
    for d in defects:
        print(f"graph defect: {d.kind}: {d.detail}")
    if args.dump_graph:
        Path(args.dump_graph).write_text(dump_adjacency(g))
    print(f"config ok; graph: {len(g.segments)} segments, {len(g.edges)} turn edges, "
          f"{len(g.intersections)} intersections, {len(defects)} defects")
    return EXIT_CONFIG if defects else EXIT_OK


def cmd_plot(args) -> int:
    series = args.series or str(Path(args.results).with_name("series.csv"))
    for p in outputs.plot_from_files(args.results, series, args.out):
        print(p)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .acceptance import run_acceptance

    results = run_acceptance(jobs=args.jobs, quick=args.quick)
    for c in results:
        print(c.line())
    return EXIT_OK if all(c.passed for c in results) else EXIT_ACCEPTANCE


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="infoshare", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("config", nargs="?", help="scenario YAML file (defaults if omitted)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        return p

    p = with_config(sub.add_parser("run", help="run a single scenario"))
    p.add_argument("--out", default="out")
    p.add_argument("--trace", action="store_true", help="write the per-vehicle trace CSV")
    p.add_argument("--dump-snapshots", action="store_true", help="write every weight snapshot as CSV")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run every scenario of a sweep manifest")
    p.add_argument("manifest")
    p.add_argument("--out", default="out")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--traces", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = with_config(sub.add_parser("calibrate", help="find a low- or high-congestion demand level"))
    p.add_argument("--regime", choices=("low", "high"), required=True)
    p.add_argument("--seeds", default="100,101,102,103,104")
    p.add_argument("--quorum", type=float, default=1.0)
    p.add_argument("--threshold", type=float, default=HIGH_SLOPE_THRESHOLD,
                   help="static slope (s/min) that marks the high regime")
    p.set_defaults(func=cmd_calibrate)

    p = with_config(sub.add_parser("validate", help="check a config and its generated graph"))
    p.add_argument("--dump-graph", metavar="FILE", help="write the adjacency list (from,to,intersection,movement)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("plot", help="re-emit charts from a results CSV")
    p.add_argument("results")
    p.add_argument("--series")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("verify", help="run the built-in acceptance checks")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--quick", action="store_true", help="fewer seeds; smoke check only")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CalibrationError, outputs.OutputError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
