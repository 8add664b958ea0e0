"""Run every pipeline for one config and emit all plot-data views.

    python3 scripts/run_all.py --config scripts/default.cfg --out runs/demo --workers 4
"""

import argparse
import time

from fracwave.config import ExperimentConfig
from fracwave.runner import SUBCOMMANDS, run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config")
    ap.add_argument("--out", default="runs/all")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--workers", type=int)
    ap.add_argument("--overwrite", action="store_true")
    ap.add_argument("--only", nargs="*", choices=SUBCOMMANDS)
    args = ap.parse_args()
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    failed = []
    for sub in args.only or SUBCOMMANDS:
        t0 = time.perf_counter()
        directory, status = run(cfg, sub, out=args.out, seed=args.seed, overwrite=args.overwrite, workers=args.workers)
        print(f"{sub:8s} status {status}  {time.perf_counter() - t0:6.1f}s  {directory}")
        if status:
            failed.append(sub)
    raise SystemExit(1 if failed else 0)


if __name__ == "__main__":
    main()
