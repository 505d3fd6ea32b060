"""Command-line experiment runner.

Exit codes: 0 success, 2 configuration error, 3 capacity error,
4 numerical-diagnostic failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import load_config
from .errors import CapacityError, ConfigError, DiagnosticError
from .experiments import compare_runs, run_experiment

EXIT_CONFIG = 2
EXIT_CAPACITY = 3
EXIT_DIAGNOSTIC = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdrkit",
        description="Clifford-data-regression error-mitigation experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment config")
    run.add_argument("config", help="path to a JSON experiment config")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument(
        "--workers",
        type=int,
        default=None,
        help="worker processes (default: CDRKIT_WORKERS or 1)",
    )
    run.add_argument("--out", default=None, help="output directory (default: ./results)")

    cmp_cmd = sub.add_parser("compare", help="compare result directories")
    cmp_cmd.add_argument("dirs", nargs="+", help="result directories to align")
    cmp_cmd.add_argument("--out", default=None, help="write comparison CSV here")

    val = sub.add_parser("validate", help="validate a config without running it")
    val.add_argument("config", help="path to a JSON experiment config")
    return parser


def _workers(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("CDRKIT_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"CDRKIT_WORKERS={env!r} is not an integer") from exc
    return 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            load_config(args.config)
            print(f"{args.config}: OK")
            return 0
        if args.command == "run":
            cfg = load_config(args.config)
            if args.seed is not None:
                raw = dict(cfg.raw)
                raw["seed"] = args.seed
                from .config import parse_config

                cfg = parse_config(raw)
            out_dir = args.out or "results"
            summary = run_experiment(cfg, out_dir, workers=_workers(args.workers))
            print(json.dumps(summary, indent=1, sort_keys=True))
            return 0
        if args.command == "compare":
            out = args.out
            table = compare_runs(args.dirs, out_path=out)
            print(json.dumps(table, indent=1, sort_keys=True))
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except DiagnosticError as exc:
        print(f"diagnostic failure: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
