"""Pre-limit forward/backward mode system at finite eps.

Medium atom q couples mode kappa - q into mode kappa. With
lam(kappa) = sqrt(1 - eps^2 |kappa|^2 / k^2) and the fast variable z/eps, the
coupling block for one atom is

    (i eps^(s-2) k / 2) * weight * Theta(B(z/eps, q)) * P(z)

    P = [[ e^{i k (lam(kappa-q) - lam(kappa)) z/eps^2},  e^{-i k (lam(kappa-q) + lam(kappa)) z/eps^2}],
         [-e^{i k (lam(kappa-q) + lam(kappa)) z/eps^2}, -e^{-i k (lam(kappa-q) - lam(kappa)) z/eps^2}]]

acting on (A, B)(z, kappa - q). Only propagating modes |kappa| < k/eps are kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .medium import AtomicMeasure, FieldSample, TransverseGrid, as_wavevectors
from .solver import Coupling, SourceSpec, StepError, WaveField, coupling_for, lattice_norm, rk4


@dataclass(frozen=True)
class EpsRegime:
    eps: float
    hurst_frak: float
    alpha_eps: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        if self.alpha_eps < 0:
            raise ValueError("absorption must be nonnegative")
        if self.alpha_eps > self.eps**2.5:
            raise ValueError(f"absorption {self.alpha_eps} exceeds eps^2.5 = {self.eps ** 2.5:.3g}")

    @property
    def s(self) -> float:
        return 2.0 - self.hurst_frak / 2.0

    def alpha_omega(self, k: float) -> float:
        return self.alpha_eps * self.eps**4 / k**2


def lambda_eps(kappa, regime: EpsRegime, k: float) -> np.ndarray:
    """Principal root sqrt(1 - eps^2 |kappa|^2 / k^2 + i alpha_omega)."""
    kap2 = (as_wavevectors(kappa) ** 2).sum(axis=1)
    return np.sqrt(1 - regime.eps**2 * kap2 / k**2 + 1j * regime.alpha_omega(k) + 0j)


def lambda_real(kappa, regime: EpsRegime, k: float) -> np.ndarray:
    """sqrt(1 - eps^2 |kappa|^2 / k^2) for propagating modes, nan beyond."""
    kap2 = (as_wavevectors(kappa) ** 2).sum(axis=1)
    arg = 1 - regime.eps**2 * kap2 / k**2
    return np.where(arg > 0, np.sqrt(np.clip(arg, 0, None)), np.nan)


def propagating(grid: TransverseGrid, regime: EpsRegime, k: float) -> np.ndarray:
    kap2 = (grid.kappa_points() ** 2).sum(axis=1)
    return kap2 < (k / regime.eps) ** 2


def phi_eps(src: SourceSpec, regime: EpsRegime, omega: float, grid: TransverseGrid) -> np.ndarray:
    """(sqrt(lam)/2) f0hat(omega, kappa) exp(-i k (lam - 1) L_S / eps^2), zero for evanescent kappa."""
    k = src.k(omega)
    kap = grid.kappa_points()
    lam = lambda_eps(kap, regime, k)
    vals = 0.5 * np.sqrt(lam) * src.spectrum(omega, kap) * np.exp(-1j * k * (lam - 1) * src.L_S / regime.eps**2)
    return np.where(propagating(grid, regime, k), vals, 0.0)


def mode_step(regime: EpsRegime, k: float, resolution: float = 0.1) -> float:
    """Step with the fastest (backward) phase 2k/eps^2 advancing `resolution` radians."""
    return resolution * regime.eps**2 / (2 * abs(k))


def fast_grid(regime: EpsRegime, k: float, L: float, resolution: float = 0.1) -> tuple[np.ndarray, float, int]:
    """Fast-variable grid z/eps at every RK4 stage point, plus the step and step count."""
    steps = int(math.ceil(L / mode_step(regime, k, resolution) - 1e-9))
    h = L / steps
    return np.arange(2 * steps + 1) * (h / (2 * regime.eps)), h, steps


@dataclass
class ModeTrajectory:
    z: np.ndarray
    A: np.ndarray  # (nz, nkappa)
    B: np.ndarray
    grid: TransverseGrid
    k: float
    regime: EpsRegime

    def energy(self) -> np.ndarray:
        """|A|^2 - |B|^2 per slice; conserved by the lossless system."""
        cell = self.grid.dkappa**self.grid.dim
        return (np.sum(np.abs(self.A) ** 2, axis=1) - np.sum(np.abs(self.B) ** 2, axis=1)) * cell

    def backscatter(self) -> float:
        return lattice_norm(self.B[-1], self.grid)


@dataclass
class _Blocks:
    coupling: Coupling
    lam_src: list  # per shift lam(kappa - q) at targets
    lam_tgt: list  # per shift lam(kappa) at targets


def _blocks(measure: AtomicMeasure, grid: TransverseGrid, regime: EpsRegime, k: float) -> _Blocks:
    coupling = coupling_for(measure, grid, k)
    keep = propagating(grid, regime, k)
    lam = lambda_real(grid.kappa_points(), regime, k)
    for si in range(len(coupling.groups)):
        tgt, srcs = coupling.target[si], coupling.source[si]
        ok = keep[tgt] & keep[srcs]
        coupling.target[si], coupling.source[si], coupling.rate[si] = tgt[ok], srcs[ok], coupling.rate[si][ok]
    return _Blocks(coupling,
                   [lam[coupling.source[i]] for i in range(len(coupling.groups))],
                   [lam[coupling.target[i]] for i in range(len(coupling.groups))])


def _coefficients(measure: AtomicMeasure, bfrak: FieldSample, theta, coupling: Coupling, regime: EpsRegime,
                  k: float) -> np.ndarray:
    """(i eps^(s-2) k / 2) * sum over atoms of each shift of weight * Theta(B(z/eps, q)); (nstages, nshifts)."""
    th = theta(bfrak.at(measure.full_q))
    w = measure.full_weights
    out = np.empty((th.shape[0], len(coupling.groups)), dtype=complex)
    for si, g in enumerate(coupling.groups):
        out[:, si] = th[:, g] @ w[g]
    return out * (1j * regime.eps ** (regime.s - 2) * k / 2)


def propagate_modes(regime: EpsRegime, measure: AtomicMeasure, bfrak: FieldSample, theta, src: SourceSpec,
                    omega: float, grid: TransverseGrid, L: float, forward_only: bool = False,
                    diagonal: bool = True, store_every: Optional[int] = None, initial=None) -> ModeTrajectory:
    """Integrate the coupled (A, B) system with A(0) = phi_eps, B(0) = 0.

    initial=(A0, B0) replaces the boundary datum, e.g. to apply the propagator to other data.
    bfrak must be sampled on fast_grid(regime, k, L)[0] (all RK4 stage points in z/eps).
    forward_only drops the off-diagonal blocks; diagonal=False drops the diagonal ones.
    """
    k = src.k(omega)
    zf = bfrak.z
    steps = (zf.size - 1) // 2
    if zf.size != 2 * steps + 1 or steps < 1:
        raise ValueError("medium must be sampled at the 2 * steps + 1 RK4 stage points")
    h = 2 * regime.eps * (zf[1] - zf[0])
    if abs(steps * h - L) > 1e-9 * L:
        raise ValueError("medium grid does not span [0, L]")
    if 2 * abs(k) / regime.eps**2 * h > 0.5:
        raise StepError(f"step {h:.3g} does not resolve the phase scale eps^2/k; "
                        f"use dz <= {mode_step(regime, k):.3g}")
    blocks = _blocks(measure, grid, regime, k)
    coupling = blocks.coupling
    coeffs = _coefficients(measure, bfrak, theta, coupling, regime, k)
    fast = k / regime.eps**2
    nk = grid.n**grid.dim

    def rhs(n, stage, z, Y):
        A, B = Y[:nk], Y[nk:]
        dA = np.zeros(nk, dtype=complex)
        dB = np.zeros(nk, dtype=complex)
        c = coeffs[2 * n + stage]
        for si in range(len(coupling.groups)):
            tgt, srcs = coupling.target[si], coupling.source[si]
            ls, lt = blocks.lam_src[si], blocks.lam_tgt[si]
            a_src, b_src = A[srcs], B[srcs]
            diff = fast * (ls - lt) * z
            summ = fast * (ls + lt) * z
            if diagonal:
                dA[tgt] += c[si] * np.exp(1j * diff) * a_src
                if not forward_only:
                    dB[tgt] -= c[si] * np.exp(-1j * diff) * b_src
            if not forward_only:
                dA[tgt] += c[si] * np.exp(-1j * summ) * b_src
                dB[tgt] -= c[si] * np.exp(1j * summ) * a_src
        return np.concatenate([dA, dB])

    if initial is None:
        initial = (phi_eps(src, regime, omega, grid), np.zeros(nk, dtype=complex))
    Y0 = np.concatenate([np.asarray(initial[0], dtype=complex), np.asarray(initial[1], dtype=complex)])
    every = store_every or steps
    zs, vals = rk4(rhs, Y0, 0.0, h, steps, every)
    return ModeTrajectory(zs, vals[:, :nk], vals[:, nk:], grid, k, regime)


def forward_only(regime: EpsRegime, measure: AtomicMeasure, bfrak: FieldSample, theta, src: SourceSpec,
                 omega: float, grid: TransverseGrid, L: float, store_every: Optional[int] = None) -> WaveField:
    traj = propagate_modes(regime, measure, bfrak, theta, src, omega, grid, L, forward_only=True,
                           store_every=store_every)
    return WaveField(omega, traj.k, grid, traj.z, traj.A, "X_eps")


@dataclass(frozen=True)
class SweepRow:
    eps: float
    backscatter: float
    forward_error: float
    input_norm: float
    output_norm: float
    energy_drift: float
    seed: int


def sweep_point(regime: EpsRegime, measure: AtomicMeasure, bfrak: FieldSample, theta, src: SourceSpec,
                omega: float, grid: TransverseGrid, L: float, seed: int = 0) -> SweepRow:
    full = propagate_modes(regime, measure, bfrak, theta, src, omega, grid, L)
    fwd = forward_only(regime, measure, bfrak, theta, src, omega, grid, L)
    n0 = lattice_norm(full.A[0], grid)
    e = full.energy()
    return SweepRow(regime.eps, full.backscatter() / n0, lattice_norm(full.A[-1] - fwd.final(), grid) / n0,
                    n0, lattice_norm(full.A[-1], grid), float(np.max(np.abs(e - e[0])) / e[0]), seed)
