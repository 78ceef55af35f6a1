#!/usr/bin/env python3
"""
Command-line front end for replica predictions and Monte Carlo validation

USAGE:
    # RS and/or 1RSB prediction at the config's point, CSV on stdout
    replicacs predict --config l2.json

    # Fail with exit code 3 if any solver did not converge
    replicacs predict --config l0.json --strict

    # λ or rate sweep (optionally λ-minimized per point), 4 worker processes
    replicacs sweep --config fig1.json --out fig1.csv --jobs 4

    # Restrict the RS λ-minimization to the converged λ block
    replicacs sweep --config fig1.json --out fig1_restricted.csv --restricted-rs

    # Monte Carlo: per-trial CSV plus JSON summary
    replicacs simulate --config l2_sim.json --out trials.csv

EXIT CODES:
    0  success (non-converged solvers are reported in the status column)
    2  invalid config or unsupported problem size
    3  a solver did not converge and --strict was given
"""

import argparse
import json
import logging
import sys
import time
from contextlib import contextmanager
from pathlib import Path
from typing import IO, Iterator, List, Optional

from .__version__ import __version__
from .errors import ConfigError, SizeError
from .models import PredictionRow, RunConfig
from .simulate import run_sim
from .sweep import SolverSettings, build_sim_config, build_system, predict, run_sweep
from .utils import load_config, sim_summary, write_json, write_prediction_csv, write_trials_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3


@contextmanager
def _output(path: Optional[str]) -> Iterator[IO[str]]:
    """File opened for CSV writing, or stdout"""
    if path is None:
        yield sys.stdout
        return
    with open(path, "w", encoding="utf-8", newline="") as f:
        yield f


def _base_dir(config_path: str) -> Path:
    return Path(config_path).resolve().parent


def _check_strict(rows: List[PredictionRow], strict: bool) -> int:
    failed = [row for row in rows if row["status"] != "Converged"]
    if not failed:
        return EXIT_OK
    for row in failed:
        logger.warning(
            f"{row['solver']} {row['penalty']}/{row['ensemble']} λ={row['lam']} "
            f"r={row['rate']}: {row['status']}"
        )
    if strict:
        print(f"❌ {len(failed)} row(s) did not converge", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    """Single-point RS/1RSB prediction"""
    cfg = load_config(args.config)
    system = build_system(cfg, _base_dir(args.config))
    rows = predict(system, cfg.solver, SolverSettings.from_config(cfg))

    with _output(args.out) as stream:
        write_prediction_csv(rows, stream)
    if args.out:
        print(f"✓ {len(rows)} row(s) written to {args.out}", file=sys.stderr)
    return _check_strict(rows, args.strict)


def cmd_sweep(args: argparse.Namespace) -> int:
    """Grid sweep over λ or the compression rate"""
    cfg = load_config(args.config)
    if cfg.sweep is None:
        raise ConfigError(f"{args.config}: sweep: missing 'sweep' block")

    started = time.perf_counter()
    rows = run_sweep(cfg, _base_dir(args.config), jobs=args.jobs, restricted=args.restricted_rs)
    with _output(args.out) as stream:
        write_prediction_csv(rows, stream)

    elapsed = time.perf_counter() - started
    target = args.out or "stdout"
    print(f"✓ {len(rows)} row(s) written to {target} in {elapsed:.1f}s", file=sys.stderr)
    return _check_strict(rows, args.strict)


def _summary_path(args: argparse.Namespace) -> Optional[Path]:
    if args.summary:
        return Path(args.summary)
    if args.out:
        return Path(args.out).with_suffix(".json")
    return None


def cmd_simulate(args: argparse.Namespace) -> int:
    """Monte Carlo reconstruction at the config's point"""
    cfg: RunConfig = load_config(args.config)
    system = build_system(cfg, _base_dir(args.config))
    sim_cfg = build_sim_config(system, cfg.sim)

    started = time.perf_counter()
    report = run_sim(sim_cfg, jobs=args.jobs)
    elapsed = time.perf_counter() - started

    with _output(args.out) as stream:
        write_trials_csv(report, stream)

    summary = sim_summary(
        report,
        {
            "wall_clock_seconds": elapsed,
            "config": str(args.config),
            "penalty": sim_cfg.penalty.kind,
            "ensemble": sim_cfg.ensemble,
            "rate": sim_cfg.r,
            "lambda": sim_cfg.lam,
            "lambda0": sim_cfg.lam0,
            "s": sim_cfg.prior.s,
            "version": __version__,
        },
    )
    summary_path = _summary_path(args)
    if summary_path is None:
        print(json.dumps(summary, ensure_ascii=False, indent=2, sort_keys=True), file=sys.stderr)
    else:
        write_json(summary, summary_path)

    print(
        f"✓ D = {report.mean:.6g} ± {report.stderr:.2g} over {report.trials} trial(s), "
        f"seed {report.seed}",
        file=sys.stderr,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="replicacs",
        description="Replica predictions for regularized least-squares compressive sensing",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s predict --config l2.json                       # CSV on stdout
  %(prog)s predict --config l0.json --strict              # exit 3 unless converged
  %(prog)s sweep --config fig2.json --out fig2.csv        # λ or rate sweep
  %(prog)s sweep --config fig1.json --jobs 4 --restricted-rs
  %(prog)s simulate --config sim.json --out trials.csv    # + trials.json summary
        """,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", required=True, help="JSON config file")
    common.add_argument("-o", "--out", help="Output CSV file (default: stdout)")
    common.add_argument(
        "-j", "--jobs", type=int, default=1, help="Worker processes/threads (default: 1)"
    )
    common.add_argument(
        "--strict",
        action="store_true",
        help="Exit with code 3 if any solver did not converge",
    )
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")

    sub = parser.add_subparsers(dest="command", required=True)

    p_predict = sub.add_parser("predict", parents=[common], help="Single-point prediction")
    p_predict.set_defaults(handler=cmd_predict)

    p_sweep = sub.add_parser("sweep", parents=[common], help="λ or rate sweep")
    p_sweep.add_argument(
        "--restricted-rs",
        action="store_true",
        help="Restrict RS λ-minimization to the block of converged λ",
    )
    p_sweep.set_defaults(handler=cmd_sweep)

    p_sim = sub.add_parser("simulate", parents=[common], help="Monte Carlo validation")
    p_sim.add_argument(
        "--summary",
        help="JSON summary file (default: --out with .json suffix, else stderr)",
    )
    p_sim.set_defaults(handler=cmd_simulate)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )

    if args.jobs < 1:
        print("❌ --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG

    try:
        code: int = args.handler(args)
        return code
    except ConfigError as e:
        print(f"❌ Config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SizeError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
