"""Random medium V(z, x) = sum over atoms of weight * exp(-i q.x) * Theta(B(z, q)).

B is a Gaussian field with covariance r(z - z') * Rhat(q, q'). Its transverse
part comes from a Nystrom eigen-decomposition of Rhat, its longitudinal part
from circulant embedding of the long-range correlation r.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .embedding import CirculantSampler
from .special_fn import LongRangeLaw, ThetaSpec


class InvalidKernel(ValueError):
    pass


class ConsistencyError(ValueError):
    pass


class CapViolation(ValueError):
    pass


class EstimationError(RuntimeError):
    pass


def as_wavevectors(q) -> np.ndarray:
    """Wavevectors as an (n, d) float array; a flat array is read as n points in 1-d."""
    q = np.asarray(q, dtype=float)
    if q.ndim == 0:
        q = q.reshape(1, 1)
    elif q.ndim == 1:
        q = q[:, None]
    return q


def canonical(q) -> np.ndarray:
    """Representative of {q, -q}: the sign making the first nonzero component nonnegative.

    B(z, q) = B(z, -q), so every field lookup goes through this map.
    """
    q = as_wavevectors(q).copy()
    for row in q:
        nz = np.flatnonzero(row)
        if nz.size and row[nz[0]] < 0:
            row *= -1
    return q + 0.0  # normalise -0.0


# ---------------------------------------------------------------- transverse grid

@dataclass(frozen=True)
class TransverseGrid:
    """Periodic window of side `length` with `n` points per axis (n odd keeps the dual lattice symmetric)."""

    n: int
    length: float
    dim: int = 1

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("transverse dimension must be 1 or 2")
        if self.n < 1 or self.length <= 0:
            raise ValueError("grid needs n >= 1 and positive length")

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def dkappa(self) -> float:
        return 2 * math.pi / self.length

    @property
    def axis(self) -> np.ndarray:
        return (np.arange(self.n) - self.n // 2) * self.dx

    @property
    def kappa_axis(self) -> np.ndarray:
        return (np.arange(self.n) - self.n // 2) * self.dkappa

    def points(self) -> np.ndarray:
        """All x points as (n**dim, dim)."""
        axes = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        return np.stack([a.ravel() for a in axes], axis=1)

    def kappa_points(self) -> np.ndarray:
        axes = np.meshgrid(*([self.kappa_axis] * self.dim), indexing="ij")
        return np.stack([a.ravel() for a in axes], axis=1)

    def snap(self, q) -> np.ndarray:
        """Round wavevectors to the nearest dual-lattice point."""
        return np.round(as_wavevectors(q) / self.dkappa) * self.dkappa


# ---------------------------------------------------------------- kernel

@dataclass(frozen=True)
class KernelSpec:
    """Transverse correlation Rhat(p, q) on S = [-radius, radius]^d.

    kind: "constant" (Rhat = 1), "gaussian" (exp(-|p-q|^2/(2 length^2))),
    "cosine" (sum of cosine modes with beta_n ~ n^-2) or "custom" (fn).
    """

    kind: str = "gaussian"
    length: float = 1.0
    radius: float = 1.0
    dim: int = 1
    fn: Optional[Callable] = field(default=None, compare=False, repr=False)

    def __call__(self, p, q) -> np.ndarray:
        p, q = as_wavevectors(p), as_wavevectors(q)
        if self.kind == "constant":
            return np.ones((p.shape[0], q.shape[0]))
        if self.kind == "gaussian":
            d2 = ((p[:, None, :] - q[None, :, :]) ** 2).sum(-1)
            return np.exp(-d2 / (2 * self.length**2))
        if self.kind == "cosine":
            out = np.ones((p.shape[0], q.shape[0]))
            n = np.arange(1, 65)
            beta = 1.0 / n**2
            for axis in range(p.shape[1]):
                diff = p[:, None, axis] - q[None, :, axis]
                part = np.tensordot(np.cos(np.multiply.outer(diff, n * math.pi / (2 * self.radius))), beta, axes=1)
                out *= (1 + part) / (1 + beta.sum())
            return out
        if self.kind == "custom":
            return np.asarray(self.fn(p[:, None, :], q[None, :, :]), dtype=float)
        raise ValueError(f"unknown kernel kind {self.kind!r}")

    @property
    def volume(self) -> float:
        return (2 * self.radius) ** self.dim


@dataclass(frozen=True)
class KernelEigen:
    nodes: np.ndarray  # (N, d)
    weights: np.ndarray  # (N,)
    eigvals: np.ndarray  # descending, nonnegative, truncated
    eigvecs: np.ndarray  # (N, rank), orthonormal in the weighted inner product
    spec: KernelSpec

    @property
    def rank(self) -> int:
        return self.eigvals.size

    def modes_at(self, q) -> np.ndarray:
        """e_n at arbitrary q by Nystrom interpolation, evaluated at the canonical representative."""
        qc = canonical(q)
        kq = self.spec(qc, self.nodes)
        return (kq * self.weights) @ self.eigvecs / self.eigvals

    def loadings(self, q) -> np.ndarray:
        """sqrt(beta_n) e_n(q), shape (len(q), rank)."""
        return self.modes_at(q) * np.sqrt(self.eigvals)

    def covariance(self, p, q) -> np.ndarray:
        """Truncated reconstruction of Rhat at canonical representatives."""
        return self.loadings(p) @ self.loadings(q).T

    def trace(self) -> float:
        return float(self.eigvals.sum())


def build_kernel(spec: KernelSpec, node_count: int = 64, rel_cut: float = 1e-10) -> KernelEigen:
    """Nystrom eigen-decomposition of Rhat on Gauss-Legendre nodes of S."""
    x, w = np.polynomial.legendre.leggauss(node_count)
    x, w = x * spec.radius, w * spec.radius
    if spec.dim == 2:
        xx, yy = np.meshgrid(x, x, indexing="ij")
        nodes = np.stack([xx.ravel(), yy.ravel()], axis=1)
        weights = np.outer(w, w).ravel()
    else:
        nodes, weights = x[:, None], w
    K = spec(nodes, nodes)
    if not np.allclose(K, K.T, atol=1e-12):
        raise InvalidKernel("kernel is not symmetric")
    if np.any(K <= 0) or np.any(K > 1 + 1e-12):
        raise InvalidKernel("kernel must satisfy 0 < Rhat <= 1 at every node pair")
    if not np.allclose(np.diag(K), 1.0, atol=1e-12):
        raise InvalidKernel("kernel must satisfy Rhat(q, q) = 1")
    sw = np.sqrt(weights)
    sym = sw[:, None] * K * sw[None, :]
    vals, vecs = np.linalg.eigh(0.5 * (sym + sym.T))
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    vals = np.where(np.abs(vals) < 1e-12, 0.0, vals)
    keep = vals > rel_cut * vals[0]
    vals, vecs = vals[keep], vecs[:, keep] / sw[:, None]
    return KernelEigen(nodes, weights, vals, vecs, spec)


# ---------------------------------------------------------------- atomic measure

@dataclass(frozen=True)
class MeasureSpec:
    """Law of the atoms: a_j = weight for j < n_atoms, U_j uniform on the unit disk
    (or on [-1, 1] for amplitude="interval"), q_j uniform among lattice points of S."""

    n_atoms: int = 8
    weight: float = 1.0
    amplitude: str = "disk"
    radius: float = 1.0
    cap: float = 16.0

    @property
    def amplitude_second_moment(self) -> float:
        return 0.5 if self.amplitude == "disk" else 1.0 / 3.0


@dataclass(frozen=True)
class AtomicMeasure:
    """Atoms (a_j, U_j, q_j); mirrors (a_j, conj U_j, -q_j) are implied."""

    a: np.ndarray
    U: np.ndarray
    q: np.ndarray  # (n, d)
    support_radius: float
    cap: float
    amplitude_second_moment: float = 0.5

    def __post_init__(self):
        if np.any(self.a < 0):
            raise CapViolation("atom weights must be nonnegative")
        if np.any(np.abs(self.q) > self.support_radius + 1e-12):
            raise CapViolation("atom outside the support S")
        if self.total_variation > self.cap * (1 + 1e-12):
            raise CapViolation(f"|m|(S) = {self.total_variation:.4g} exceeds cap {self.cap:.4g}")

    @property
    def total_variation(self) -> float:
        return float(2 * np.sum(self.a * np.abs(self.U)))

    @property
    def full_weights(self) -> np.ndarray:
        """Complex weights of atoms followed by their mirrors."""
        return np.concatenate([self.a * self.U, self.a * np.conj(self.U)])

    @property
    def full_q(self) -> np.ndarray:
        return np.concatenate([self.q, -self.q])

    def apply(self, phi: Callable) -> complex:
        """m(phi) = sum_j a_j (U_j phi(q_j) + conj(U_j) phi(-q_j))."""
        return complex(np.sum(self.full_weights * phi(self.full_q)))

    def R0(self, x) -> np.ndarray:
        """Expected transverse correlation sum_j a_j^2 E|U|^2 (e^{-iqx} + e^{iqx}) for this atom set."""
        x = as_wavevectors(x)
        phase = x @ self.q.T
        return 2 * self.amplitude_second_moment * (np.cos(phase) * self.a**2).sum(axis=1)

    @classmethod
    def single(cls, a: float, U: float, q=0.0, cap: float = math.inf, radius: float = math.inf):
        return cls(np.array([float(a)]), np.array([complex(U)]), as_wavevectors(q), radius, cap)


def lattice_points(radius: float, grid: TransverseGrid) -> np.ndarray:
    k = grid.kappa_axis
    k = k[np.abs(k) <= radius + 1e-12]
    if grid.dim == 1:
        return k[:, None]
    kx, ky = np.meshgrid(k, k, indexing="ij")
    return np.stack([kx.ravel(), ky.ravel()], axis=1)


def sample_measure(spec: MeasureSpec, grid: TransverseGrid, rng: np.random.Generator) -> AtomicMeasure:
    if 2 * spec.n_atoms * spec.weight > spec.cap:
        raise CapViolation(
            f"sure bound 2 * sum a_j sup|U_j| = {2 * spec.n_atoms * spec.weight:.4g} exceeds cap {spec.cap:.4g}")
    a = np.full(spec.n_atoms, float(spec.weight))
    if spec.amplitude == "disk":
        rad = np.sqrt(rng.random(spec.n_atoms))
        U = rad * np.exp(2j * math.pi * rng.random(spec.n_atoms))
    elif spec.amplitude == "interval":
        U = rng.uniform(-1.0, 1.0, spec.n_atoms).astype(complex)
    else:
        raise ValueError(f"unknown amplitude law {spec.amplitude!r}")
    pts = lattice_points(spec.radius, grid)
    q = pts[rng.integers(0, len(pts), spec.n_atoms)]
    return AtomicMeasure(a, U, q, spec.radius, spec.cap, spec.amplitude_second_moment)


# ---------------------------------------------------------------- long-range field

@dataclass
class FieldSample:
    """Field values on a z-grid at a set of canonical wavevectors.

    values has shape (nz, nq); `noise` keeps whatever generated it (spectral
    draws or longitudinal mode paths) so it can be reused.
    """

    z: np.ndarray
    q: np.ndarray  # canonical, (nq, d)
    values: np.ndarray
    kind: str
    noise: object = None

    def columns(self, q) -> np.ndarray:
        """Column indices for the given wavevectors (mirrors map to the same column)."""
        qc = canonical(q)
        idx = np.empty(len(qc), dtype=int)
        for i, row in enumerate(qc):
            hit = np.flatnonzero(np.all(np.abs(self.q - row) < 1e-9, axis=1))
            if hit.size == 0:
                raise ConsistencyError(f"wavevector {row} missing from field sample")
            idx[i] = hit[0]
        return idx

    def at(self, q) -> np.ndarray:
        return self.values[:, self.columns(q)]


def unique_canonical(q) -> np.ndarray:
    qc = canonical(q)
    return np.unique(np.round(qc, 12), axis=0)


def longitudinal_sampler(law: LongRangeLaw, n: int, dz: float, neg_tol: float = 5e-4) -> CirculantSampler:
    return CirculantSampler(law.correlation, n, dz, neg_tol=neg_tol)


def sample_bfrak(kernel: KernelEigen, law: LongRangeLaw, z: np.ndarray, q, rng: np.random.Generator,
                 sampler: Optional[CirculantSampler] = None) -> FieldSample:
    """B(z, q) = sum_n sqrt(beta_n) e_n(q) xi_n(z) with xi_n independent, autocorrelation r."""
    z = np.asarray(z, dtype=float)
    dz = z[1] - z[0] if z.size > 1 else 1.0
    if z.size > 2 and not np.allclose(np.diff(z), dz, rtol=1e-9, atol=1e-12):
        raise ValueError("z grid must be uniform")
    if sampler is None:
        sampler = longitudinal_sampler(law, z.size, dz)
    qs = unique_canonical(q)
    xi = sampler.sample(rng, kernel.rank)  # (rank, nz)
    values = xi.T @ kernel.loadings(qs).T
    return FieldSample(z, qs, values, "bfrak", xi)


# ---------------------------------------------------------------- medium

@dataclass
class MediumSample:
    z: np.ndarray
    bfrak: FieldSample
    measure: AtomicMeasure
    theta_name: str
    v_real: Optional[np.ndarray] = None  # (nz, nx)
    x: Optional[np.ndarray] = None
    imag_residue: float = 0.0


def synthesize_V(measure: AtomicMeasure, bfrak: FieldSample, theta, x) -> MediumSample:
    x = as_wavevectors(x)
    th = theta(bfrak.at(measure.full_q))  # (nz, 2n)
    modes = measure.full_weights[:, None] * np.exp(-1j * (measure.full_q @ x.T))  # (2n, nx)
    V = th @ modes
    scale = max(1.0, float(np.max(np.abs(V.real)))) if V.size else 1.0
    residue = float(np.max(np.abs(V.imag))) / scale if V.size else 0.0
    if residue > 1e-10:
        raise ConsistencyError(f"medium has imaginary residue {residue:.2e}; atom list not mirror-closed")
    name = theta.describe() if hasattr(theta, "describe") else "custom"
    return MediumSample(bfrak.z, bfrak, measure, name, V.real, x, residue)


def v_hat(measure: AtomicMeasure, bfrak: FieldSample, theta) -> np.ndarray:
    """Fourier amplitudes of V per full atom, shape (nz, 2n): weight * Theta(B(z, q))."""
    return measure.full_weights[None, :] * theta(bfrak.at(measure.full_q))


# ---------------------------------------------------------------- statistics

def autocovariance(series: np.ndarray, other: Optional[np.ndarray], lags) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error over replicas of series[t + lag] * other[t], averaged over t.

    series, other: (replicas, nz).
    """
    other = series if other is None else other
    means, errs = [], []
    for lag in lags:
        prod = (series[:, lag:] * other[:, : series.shape[1] - lag]).mean(axis=1)
        means.append(prod.mean())
        errs.append(prod.std(ddof=1) / math.sqrt(len(prod)))
    return np.array(means), np.array(errs)


@dataclass(frozen=True)
class DecayFit:
    exponent: float
    amplitude: float
    lags: np.ndarray
    used: np.ndarray
    autocov: np.ndarray
    stderr: np.ndarray


def fit_decay_exponent(v_paths: np.ndarray, lags, dz: float = 1.0, other: Optional[np.ndarray] = None) -> DecayFit:
    """Least-squares fit of log autocovariance against log lag distance.

    v_paths: (replicas, nz) samples of V(., x) along z; other, if given, the
    paired samples V(., y). Returns the decay exponent and the amplitude C in
    C * distance^-exponent.
    """
    v_paths = np.asarray(v_paths)
    if v_paths.shape[0] < 100:
        raise EstimationError("decay fit needs an ensemble of at least 100 realizations")
    lags = np.asarray(lags, dtype=int)
    cov, err = autocovariance(v_paths, other, lags)
    ok = cov > 0
    if not ok.all():
        warnings.warn(f"excluded {int((~ok).sum())} lags with nonpositive autocovariance")
    if ok.sum() < 2:
        raise EstimationError("fewer than two lags with positive autocovariance")
    slope, intercept = np.polyfit(np.log(lags[ok] * dz), np.log(cov[ok]), 1)
    return DecayFit(-slope, math.exp(intercept), lags, ok, cov, err)
