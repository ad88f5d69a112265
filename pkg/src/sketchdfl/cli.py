"""Command-line entry point.

Subcommands: run, sweep, bench, check, calibrate. Exit codes: 0 success,
2 configuration problem, 3 protocol/invariant/property violation,
4 numerical divergence.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .calibration import calibrate_widths, fit_distortion_coefficient, write_table
from .checks import run_checks
from .config import emit_config, parse_config
from .engine import bench, metrics_rows, run_simulation, sweep
from .errors import (
    ConfigurationError,
    GraphGenerationError,
    NumericalDivergenceError,
    ProtocolError,
)
from .io import write_bench_csv, write_manifest, write_metrics_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_DIVERGENCE = 4


def _parse_fractions(text: str) -> list[float]:
    """Either LO:HI:STEP (inclusive) or a comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigurationError(f"--byz range must be LO:HI:STEP, got {text!r}")
        lo, hi, step = (float(p) for p in parts)
        if step <= 0 or hi < lo:
            raise ConfigurationError(f"--byz range {text!r} is empty or reversed")
        count = int(round((hi - lo) / step))
        values = [round(lo + i * step, 10) for i in range(count + 1)]
        return [v for v in values if v <= hi + 1e-12]
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigurationError(f"cannot parse --byz value {text!r}") from None


def _parse_masters(text: str) -> list[int]:
    """A count ("3" -> seeds 0,1,2) or an explicit comma list."""
    try:
        if "," in text:
            return [int(p) for p in text.split(",") if p.strip()]
        return list(range(int(text)))
    except ValueError:
        raise ConfigurationError(f"cannot parse --seeds value {text!r}") from None


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sketchdfl",
        description="Byzantine-robust decentralized FL simulator with sketch screening",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="single simulation from a config file")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--out", default="results/run")
    run_p.add_argument("--run-id", default=None)
    run_p.add_argument("--threads", type=int, default=None, help="override [run] threads")

    sweep_p = sub.add_parser("sweep", help="byzantine-fraction sweep with seed replicates")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("--byz", required=True, help="LO:HI:STEP or comma list")
    sweep_p.add_argument("--seeds", default="3", help="replicate count or comma list of master seeds")
    sweep_p.add_argument("--out", default="results/sweep")

    bench_p = sub.add_parser("bench", help="op-count scaling report")
    bench_p.add_argument("--mode", required=True, choices=("dims", "degree"))
    bench_p.add_argument("--config", default=None, help="optional base config")
    bench_p.add_argument("--out", default="results/bench")

    check_p = sub.add_parser("check", help="run property suites")
    check_p.add_argument("--suite", default=None, help="sketch, filter, or engine (default: all)")

    cal_p = sub.add_parser("calibrate", help="measure sketch distance distortion")
    cal_p.add_argument("--out", default="calibration/k_epsilon.csv")
    cal_p.add_argument("--pairs", type=int, default=1000)
    return parser


def _cmd_run(args) -> int:
    config = parse_config(args.config)
    if args.threads is not None:
        from dataclasses import replace

        config = replace(config, threads=args.threads)
    result = run_simulation(config, run_id=args.run_id)
    out = Path(args.out)
    run_id = result.manifest["run_id"]
    rows = metrics_rows(run_id, config.seeds.training, config.byz_fraction, result.metrics)
    write_metrics_csv(out / "metrics.csv", rows)
    result.manifest["resolved_config_ini"] = emit_config(config)
    write_manifest(out / "manifest.json", result.manifest)
    last = result.metrics[-1]
    print(f"run {run_id}: {config.rounds} rounds, final mean_ter={last.mean_ter:.4f}")
    print(f"wrote {out / 'metrics.csv'} and {out / 'manifest.json'}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config = parse_config(args.config)
    fractions = _parse_fractions(args.byz)
    masters = _parse_masters(args.seeds)
    rows, manifests = sweep(config, fractions, masters)
    out = Path(args.out)
    write_metrics_csv(out / "sweep.csv", rows)
    write_manifest(out / "manifests.json", {"runs": manifests})
    print(
        f"sweep: {len(fractions)} fractions x {len(masters)} seeds = "
        f"{len(fractions) * len(masters)} runs, {len(rows)} rows"
    )
    print(f"wrote {out / 'sweep.csv'}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    config = parse_config(args.config) if args.config else None
    rows = bench(args.mode, config)
    out = Path(args.out)
    write_bench_csv(out / "bench.csv", rows)
    truncated = [r for r in rows if r.truncated]
    for r in rows:
        print(f"{r.mode} x={r.x_value} {r.aggregator}: screen={r.screen_ops:.0f} "
              f"agg={r.agg_ops:.0f} tx={r.params_tx:.0f}" + (" TRUNCATED" if r.truncated else ""))
    print(f"wrote {out / 'bench.csv'}")
    if truncated:
        print("warning: ladder truncated by the resource budget", file=sys.stderr)
    return EXIT_OK


def _cmd_check(args) -> int:
    _, failed, lines = run_checks(args.suite)
    print("\n".join(lines))
    return EXIT_OK if failed == 0 else EXIT_INVARIANT


def _cmd_calibrate(args) -> int:
    if args.pairs < 1:
        raise ConfigurationError(f"--pairs must be >= 1, got {args.pairs}")
    rows = calibrate_widths(pairs=args.pairs)
    write_table(rows, args.out)
    coeff = fit_distortion_coefficient(rows)
    for r in rows:
        print(f"k={r.width:5d} epsilon_hat={r.epsilon_hat:.4f} violation={r.violation_rate:.4f}")
    print(f"fitted coefficient: {coeff:.3f} (epsilon_hat ~ coeff/sqrt(k))")
    print(f"wrote {args.out}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "bench": _cmd_bench,
        "check": _cmd_check,
        "calibrate": _cmd_calibrate,
    }
    try:
        return handlers[args.command](args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ProtocolError, GraphGenerationError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except NumericalDivergenceError as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
