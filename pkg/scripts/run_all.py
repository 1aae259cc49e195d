"""Run every experiment of every config in configs/ and print the gate table.

    python3 scripts/run_all.py [--out results] [--skip llt-montecarlo]
"""

import argparse
import sys
from pathlib import Path

from nilfold.config import load_config
from nilfold.experiments import available, run_experiment

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--configs", default=str(ROOT / "configs"))
    ap.add_argument("--out", default="results")
    ap.add_argument("--skip", nargs="*", default=[])
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()

    failed = []
    for path in sorted(Path(args.configs).glob("*.json")):
        cfg = load_config(path)
        for kind in available(cfg):
            if kind in args.skip:
                continue
            res = run_experiment(cfg, kind, Path(args.out) / cfg.name, workers=args.workers)
            print(f"{cfg.name:11s} {kind:15s} {'PASS' if res.passed else 'FAIL'}  ({res.runtime:.1f}s)")
            for line in res.lines():
                print("    " + line)
            if not res.passed:
                failed.append(f"{cfg.name}/{kind}")
    if failed:
        print("failed:", ", ".join(failed))
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
