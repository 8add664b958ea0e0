"""Backscatter and forward-approximation error against eps, with replica spread.

    python3 scripts/eps_sweep.py --eps 0.2 0.1 0.05 0.035 --replicas 8 --workers 4
"""

import argparse

import numpy as np

from fracwave import artifacts
from fracwave.config import ExperimentConfig
from fracwave.runner import run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config")
    ap.add_argument("--eps", type=float, nargs="+", default=[0.2, 0.1, 0.05])
    ap.add_argument("--replicas", type=int, default=4)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="runs/eps_sweep")
    args = ap.parse_args()
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    cfg = cfg.replace(regime={"eps": tuple(args.eps)})
    d, _ = run(cfg, "modes", out=args.out, replicas=args.replicas, workers=args.workers, overwrite=True)
    _, rows = artifacts.read_csv(d / "eps_sweep_replicas.csv")
    data = np.array([[float(x) for x in r[1:4]] for r in rows])
    print(f"{'eps':>6} {'backscatter':>22} {'forward error':>22}")
    for eps in args.eps:
        sel = data[data[:, 0] == eps]
        b, f = sel[:, 1], sel[:, 2]
        se = np.sqrt(len(sel))
        print(f"{eps:6.3f} {b.mean():11.3e} +- {b.std(ddof=1) / se if len(sel) > 1 else 0:8.1e} "
              f"{f.mean():11.3e} +- {f.std(ddof=1) / se if len(sel) > 1 else 0:8.1e}")


if __name__ == "__main__":
    main()
