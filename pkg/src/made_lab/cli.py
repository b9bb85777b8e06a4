"""``made-lab <experiment> --config PATH [--seeds 0..9] [--out DIR] [--workers N] [--check-only]``"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .config import EXPERIMENTS, ConfigError, parse_config, parse_seeds
from .harness import run_experiment


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="made-lab", description="Run a seeded tabular experiment.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, help="YAML experiment config")
    p.add_argument("--seeds", help="seed range such as 0..9, or a comma list")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--workers", type=int, help="parallel worker processes")
    p.add_argument("--check-only", action="store_true",
                   help="validate the config and write resolved_config.json only")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config)
        overrides = {"experiment": args.experiment}
        if args.seeds is not None:
            overrides["seeds"] = parse_seeds(args.seeds)
        if args.out is not None:
            overrides["out"] = args.out
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("workers: must be positive")
            overrides["workers"] = args.workers
        cfg = replace(cfg, **overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    result = run_experiment(cfg, check_only=args.check_only)
    for err in result.errors:
        print(f"run failed: {err['run']}: {err['error']}", file=sys.stderr)
    for name in result.failed_checks:
        print(f"check failed: {name}", file=sys.stderr)
    print(f"wrote {result.out_dir}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
