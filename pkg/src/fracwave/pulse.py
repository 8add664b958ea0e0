"""Time-domain pulse from per-frequency transverse fields, and its energy.

p(t, x) = int e^{-i omega t} Psi_omega(x) d omega over both bands. Negative
frequencies are the complex conjugates of the positive ones (real pulse), so
only omega > 0 fields are stored. Transverse energies use the discrete
Parseval identity of the periodic window: int |field|^2 dx = (2 pi)^d sum |X|^2 dkappa^d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import numpy as np
from scipy import integrate

from .medium import TransverseGrid, as_wavevectors
from .solver import SourceSpec, WaveField


class QuadratureCoverageError(ValueError):
    pass


@dataclass(frozen=True)
class BandQuadrature:
    """Gauss-Legendre nodes and weights on the positive band (mirrored for omega < 0)."""

    nodes: np.ndarray
    weights: np.ndarray
    band: tuple

    @classmethod
    def for_source(cls, src: SourceSpec, t_window: float, oversample: float = 2.0, minimum: int = 32):
        """Node count from the band width times the time window."""
        lo, hi = src.band
        n = max(minimum, int(math.ceil(oversample * (hi - lo) * t_window / math.pi)))
        x, w = np.polynomial.legendre.leggauss(n)
        return cls(0.5 * (hi - lo) * x + 0.5 * (hi + lo), 0.5 * (hi - lo) * w, (lo, hi))


@dataclass
class PulseField:
    t: np.ndarray
    x: Optional[np.ndarray]
    values: Optional[np.ndarray]  # p(t, x) real, only when x requested
    spectrum: np.ndarray  # P(t, kappa): transverse Fourier amplitudes per time
    grid: TransverseGrid
    quadrature: BandQuadrature
    omega_c: float

    def energy(self) -> float:
        """||p||_{L2(t,x)}: trapezoid in t, Parseval in x."""
        per_t = (2 * math.pi) ** self.grid.dim * np.sum(np.abs(self.spectrum) ** 2, axis=1) * self.grid.dkappa**self.grid.dim
        return math.sqrt(float(integrate.trapezoid(per_t, self.t)))


def _mirror_index(grid: TransverseGrid) -> np.ndarray:
    """Flat index of -kappa for every lattice point."""
    n, d = grid.n, grid.dim
    idx = np.arange(n**d).reshape((n,) * d)
    return np.flip(idx).ravel()


def _field_array(f) -> np.ndarray:
    return np.asarray(f.final() if isinstance(f, WaveField) else f)


def _match(fields: Mapping[float, object], quad: BandQuadrature) -> list:
    keys = np.array(sorted(fields), dtype=float)
    picked, missing = [], []
    for w in quad.nodes:
        j = int(np.argmin(np.abs(keys - w))) if keys.size else -1
        if j < 0 or abs(keys[j] - w) > 1e-12 * max(1.0, abs(w)):
            missing.append(float(w))
        else:
            picked.append(fields[keys[j]])
    if missing:
        more = "..." if len(missing) > 8 else ""
        raise QuadratureCoverageError(f"missing fields at omega nodes {missing[:8]}{more}")
    return picked


def synthesize_pulse(fields: Mapping[float, object], t_grid, x_grid=None, *, quad: BandQuadrature,
                     grid: Optional[TransverseGrid] = None, omega_c: float = 0.0, chunk: int = 256) -> PulseField:
    """Quadrature over omega of e^{-i omega t} Psi_omega, with the conjugate band added.

    fields maps each positive quadrature node to Psi_omega at z = L, either as a
    WaveField (its final slice is used) or as lattice amplitudes.
    """
    picked = _match(fields, quad)
    if grid is None:
        grid = next((f.grid for f in picked if isinstance(f, WaveField)), None)
        if grid is None:
            raise ValueError("grid is required when fields are plain arrays")
    psi = np.array([_field_array(f) for f in picked])
    t = np.asarray(t_grid, dtype=float)
    mirror = _mirror_index(grid)
    P = np.empty((t.size, psi.shape[1]), dtype=complex)
    for s in range(0, t.size, chunk):
        e = np.exp(-1j * np.outer(t[s : s + chunk], quad.nodes)) * quad.weights
        pos = e @ psi
        P[s : s + chunk] = pos + np.conj(pos[:, mirror])
    values = None
    if x_grid is not None:
        xs = as_wavevectors(x_grid)
        modes = np.exp(-1j * grid.kappa_points() @ xs.T) * grid.dkappa**grid.dim
        values = (P @ modes).real
    return PulseField(t, x_grid, values, P, grid, quad, omega_c)


def source_fields(src: SourceSpec, quad: BandQuadrature, grid: TransverseGrid) -> dict:
    kap = grid.kappa_points()
    return {float(w): src.spectrum(w, kap) for w in quad.nodes}


def spectral_energy(fields: Mapping[float, np.ndarray], quad: BandQuadrature, grid: TransverseGrid) -> float:
    """The same energy computed in (omega, kappa): 2 pi * 2 * sum_w w_j (2 pi)^d sum |Psi|^2 dkappa^d."""
    cell = grid.dkappa**grid.dim
    total = 0.0
    for f, wt in zip(_match(fields, quad), quad.weights):
        total += wt * np.sum(np.abs(_field_array(f)) ** 2) * cell
    return math.sqrt(2 * math.pi * 2 * (2 * math.pi) ** grid.dim * total)


def time_grid(src: SourceSpec, half_window: float, oversample: float = 4.0) -> np.ndarray:
    """Uniform t grid on [-half_window, half_window] resolving the highest frequency."""
    dt = math.pi / (oversample * (src.omega0 + src.bandwidth))
    n = int(math.ceil(half_window / dt))
    return np.arange(-n, n + 1) * dt


def pulse_at(psi_of_omega: Callable, src: SourceSpec, grid: TransverseGrid, half_window: float = 40.0,
             x=None) -> PulseField:
    """Convenience: evaluate psi_of_omega on the band quadrature and synthesize."""
    quad = BandQuadrature.for_source(src, 2 * half_window)
    fields = {float(w): psi_of_omega(float(w)) for w in quad.nodes}
    return synthesize_pulse(fields, time_grid(src, half_window), x, quad=quad, grid=grid, omega_c=src.omega_c)
