"""Command line: ``nilfold list <config>`` and ``nilfold run <config> <experiment>``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .experiments import ExperimentError, available, run_experiment


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nilfold", description="Equidistribution and local limit experiments on nilpotent groups.")
    sub = ap.add_subparsers(dest="command", required=True)
    ls = sub.add_parser("list", help="list the experiments a config supports")
    ls.add_argument("config")
    run = sub.add_parser("run", help="run one experiment (or 'all')")
    run.add_argument("config")
    run.add_argument("experiment")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--workers", type=int, default=None, help="worker threads (default: available cores)")
    run.add_argument("--mem-budget-mb", type=float, default=None, help="memory budget for ball storage and exact DP")
    run.add_argument("--out-dir", default=None, help="output directory (default: results/<config name>)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        print(e, file=sys.stderr)
        return 2
    except OSError as e:
        print(f"cannot read config: {e}", file=sys.stderr)
        return 2

    if args.command == "list":
        for name, desc in available(cfg).items():
            print(f"{name:15s} {desc}")
        return 0

    kinds = list(available(cfg)) if args.experiment == "all" else [args.experiment]
    out_dir = Path(args.out_dir) if args.out_dir else Path("results") / cfg.name
    ok = True
    for kind in kinds:
        try:
            res = run_experiment(cfg, kind, out_dir, args.seed, args.workers, args.mem_budget_mb)
        except (ExperimentError, ValueError) as e:
            print(f"{kind}: error: {e}", file=sys.stderr)
            ok = False
            continue
        print(f"== {res.kind} ({res.runtime:.1f}s) -> {out_dir}")
        for line in res.lines():
            print("  " + line)
        ok &= res.passed
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
