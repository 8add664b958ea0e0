"""Born partial sums against the direct solve as the coupling k sigma_H |m| L grows.

    python3 scripts/born_convergence.py --couplings 0.25 0.5 1 2 --seeds 4
"""

import argparse
import dataclasses
import math

import numpy as np

from fracwave.fbm import field_BH
from fracwave.medium import KernelSpec, MeasureSpec, TransverseGrid, build_kernel, sample_measure
from fracwave.solver import SourceSpec, born_series, initial_condition, lattice_norm, solve_regularized
from fracwave.special_fn import LongRangeLaw, ThetaSpec, constants
from fracwave.streams import stream


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--couplings", type=float, nargs="+", default=[0.25, 0.5, 1.0, 2.0])
    ap.add_argument("--seeds", type=int, default=4)
    ap.add_argument("--order", type=int, default=5)
    args = ap.parse_args()
    C = constants(ThetaSpec.sine(1.0), LongRangeLaw(0.5))
    grid = TransverseGrid(129, 2 * math.pi * 8)
    kern = build_kernel(KernelSpec("gaussian", 1.0, 1.0), 32)
    phi = initial_condition(SourceSpec(), 10.0, grid)
    n0 = lattice_norm(phi.values[0], grid)
    print("coupling  " + "  ".join(f"N={n:<7d}" for n in range(1, args.order + 1)))
    for c in args.couplings:
        res = np.zeros((args.seeds, args.order))
        for s in range(args.seeds):
            rng = stream(s, "born-script")
            m = sample_measure(MeasureSpec(3, 1.0, radius=1.0, cap=6.0), grid, rng)
            scale = c / (phi.k * C.sigma_H * m.cap)
            m = dataclasses.replace(m, a=m.a * scale, cap=m.cap * scale)
            bh = field_BH(kern, C.H, 4.0, np.linspace(0, 1, 11), m.full_q, rng)
            ref = solve_regularized(bh, m, phi, 1.0, C.sigma_H, dz=0.002).final()
            terms = born_series(bh, m, phi, 1.0, C.sigma_H, args.order)
            res[s] = [lattice_norm(terms[: n + 1].sum(0) - ref, grid) / n0 for n in range(1, args.order + 1)]
        print(f"{c:8.2f}  " + "  ".join(f"{v:9.2e}" for v in res.mean(axis=0)))


if __name__ == "__main__":
    main()
