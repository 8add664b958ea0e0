"""Fractional Brownian motion: exact paths, the spectrally truncated field B^A with its
derivative b^A, the field on the kernel eigenbasis, and the physical-space mixture W.

Spectral convention: the frequency half-line (0, A] is cut into half-open bins
of width dr centred at r_k = (k + 1/2) dr; each bin carries a complex Gaussian
w_k with E|w_k|^2 = dr and E[w_k^2] = 0. Negative frequencies are the complex
conjugates, so every spectral sum is twice a real part. The weight |r|^(1/2-H)
is replaced by its root-mean-square over the bin, which keeps the variance of
each bin exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .embedding import CirculantSampler, EmbeddingError
from .medium import (AtomicMeasure, ConsistencyError, FieldSample, KernelEigen, as_wavevectors,
                     unique_canonical)
from .special_fn import hurst_constant

CHOLESKY_LIMIT = 2048


class GridSizeError(ValueError):
    pass


def fbm_covariance(H: float, u, v) -> np.ndarray:
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    return 0.5 * (np.abs(u) ** (2 * H) + np.abs(v) ** (2 * H) - np.abs(u - v) ** (2 * H))


def fgn_autocovariance(H: float, dz: float, lags) -> np.ndarray:
    k = np.abs(np.asarray(lags, dtype=float))
    return 0.5 * dz ** (2 * H) * ((k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H))


def cholesky_factor(H: float, z: np.ndarray) -> np.ndarray:
    zz = z[z > 0]
    if zz.size > CHOLESKY_LIMIT:
        raise GridSizeError(f"Cholesky fallback limited to {CHOLESKY_LIMIT} points, got {zz.size}")
    return np.linalg.cholesky(fbm_covariance(H, zz[:, None], zz[None, :]))


def fbm_exact(H: float, z, rng: np.random.Generator, paths: int = 1, method: str = "auto") -> FieldSample:
    """Paths with covariance (u^2H + v^2H - |u-v|^2H)/2 on a uniform grid starting at 0.

    Circulant embedding of the increments; Cholesky of the path covariance when
    the embedding is indefinite or method="cholesky".
    """
    if not 0.0 < H < 1.0:
        raise ValueError("H must lie in (0, 1)")
    z = np.asarray(z, dtype=float)
    if z[0] != 0.0:
        raise ValueError("z grid must start at 0")
    n = z.size - 1
    dz = z[1] - z[0]
    if not np.allclose(np.diff(z), dz, rtol=1e-9):
        raise ValueError("z grid must be uniform")
    used = method
    values = None
    if method in ("auto", "circulant"):
        try:
            sampler = CirculantSampler(lambda lag: fgn_autocovariance(H, dz, lag / dz), n, dz,
                                       start_pad=1, max_pad=4, neg_tol=1e-13)
            incr = sampler.sample(rng, paths)
            values = np.concatenate([np.zeros((paths, 1)), np.cumsum(incr, axis=1)], axis=1)
            used = "circulant"
        except EmbeddingError:
            if method == "circulant":
                raise
    if values is None:
        L = cholesky_factor(H, z)
        values = np.concatenate([np.zeros((paths, 1)), rng.standard_normal((paths, n)) @ L.T], axis=1)
        used = "cholesky"
    return FieldSample(z, np.zeros((1, 1)), values.T, "bH_exact", used)


# ---------------------------------------------------------------- spectral truncation

def default_dr(A: float, z_max: float) -> float:
    return min(math.pi / (2 * z_max), A / 512)


@dataclass
class SpectralNoise:
    """Per-mode complex Gaussian bin draws on (0, A]; negative bins are conjugates."""

    dr: float
    A: float
    draws: np.ndarray  # (modes, bins)

    @property
    def r(self) -> np.ndarray:
        return (np.arange(self.draws.shape[1]) + 0.5) * self.dr

    @property
    def modes(self) -> int:
        return self.draws.shape[0]

    def truncated(self, A: float) -> "SpectralNoise":
        """The same realization restricted to |r| <= A (a prefix of the bins)."""
        nb = int(round(A / self.dr))
        if nb > self.draws.shape[1] or abs(nb * self.dr - A) > 1e-9 * A:
            raise ValueError(f"A={A} is not a bin edge of this noise")
        return SpectralNoise(self.dr, A, self.draws[:, :nb])

    @classmethod
    def draw(cls, rng: np.random.Generator, A: float, dr: float, modes: int = 1) -> "SpectralNoise":
        nb = int(round(A / dr))
        if nb < 1:
            raise ValueError("noise needs at least one bin")
        w = rng.standard_normal((modes, nb)) + 1j * rng.standard_normal((modes, nb))
        return cls(dr, nb * dr, w * math.sqrt(dr / 2))


def bin_weights(H: float, r: np.ndarray, dr: float) -> np.ndarray:
    """Root-mean-square of |r|^(1/2 - H) over each bin."""
    lo, hi = r - dr / 2, r + dr / 2
    p = 2 - 2 * H
    return np.sqrt((hi**p - lo**p) / (p * dr))


def pair_kernel(H: float, noise_or_A, t, dr: Optional[float] = None) -> np.ndarray:
    """E[b^A(u) b^A(u + t)] for one mode: C_H * 2 * sum_k cos(r_k t) rho_k^2 dr."""
    if isinstance(noise_or_A, SpectralNoise):
        A, dr = noise_or_A.A, noise_or_A.dr
    else:
        A = noise_or_A
    r = (np.arange(int(round(A / dr))) + 0.5) * dr
    rho2 = bin_weights(H, r, dr) ** 2
    t = np.asarray(t, dtype=float)
    return hurst_constant(H) * 2 * np.cos(np.multiply.outer(t, r)) @ (rho2 * dr)


def increment_variance(H: float, A: float, dr: float, t) -> np.ndarray:
    """Var[B^A(t)] for the binned representation (deterministic)."""
    r = (np.arange(int(round(A / dr))) + 0.5) * dr
    rho2 = bin_weights(H, r, dr) ** 2
    t = np.asarray(t, dtype=float)
    gain = (2 - 2 * np.cos(np.multiply.outer(t, r))) / r**2
    return hurst_constant(H) * 2 * gain @ (rho2 * dr)


def tail_bound(H: float, A: float, t: float = 1.0) -> float:
    """Bound on the variance missing from B^A(t): C_H * 2 * int_A^inf 4 r^(-1-2H) dr."""
    return hurst_constant(H) * 8 * A ** (-2 * H) / (2 * H)


def fbm_spectral(H: float, z, noise: SpectralNoise, chunk: int = 256) -> tuple[FieldSample, FieldSample]:
    """(B^A, b^A) on the z grid for every mode carried by the noise; values have shape (nz, modes)."""
    z = np.asarray(z, dtype=float)
    r = noise.r
    coef = math.sqrt(hurst_constant(H)) * bin_weights(H, r, noise.dr) * noise.draws  # (modes, bins)
    B = np.empty((z.size, noise.modes))
    b = np.empty((z.size, noise.modes))
    for s in range(0, z.size, chunk):
        e = np.exp(1j * np.multiply.outer(z[s : s + chunk], r))
        b[s : s + chunk] = 2 * (e @ coef.T).real
        B[s : s + chunk] = 2 * (((e - 1) / (1j * r)) @ coef.T).real
    qdummy = np.zeros((noise.modes, 1))
    return (FieldSample(z, qdummy, B, "bH_spectral", noise),
            FieldSample(z, qdummy, b, "bH_derivative", noise))


@dataclass
class BHField:
    """B^A_H and b^A_H at canonical wavevectors, sharing one SpectralNoise."""

    B: FieldSample
    b: FieldSample
    noise: SpectralNoise
    loadings: np.ndarray  # (nq, modes)
    H: float

    @property
    def q(self) -> np.ndarray:
        return self.B.q

    def derivative_at(self, z, q) -> np.ndarray:
        """b^A(z, q) evaluated directly from the spectral sum at arbitrary z, shape (nz, len(q))."""
        cols = self.B.columns(q)
        _, b = fbm_spectral(self.H, np.atleast_1d(z), self.noise)
        return b.values @ self.loadings[cols].T


def field_BH(kernel: KernelEigen, H: float, A: float, z, q, rng: np.random.Generator,
             dr: Optional[float] = None, noise: Optional[SpectralNoise] = None) -> BHField:
    """B^A_H(z, q) = sum_n sqrt(beta_n) e_n(q) W^A_n(z) with independent per-mode noise."""
    z = np.asarray(z, dtype=float)
    if noise is None:
        dr = default_dr(A, z.max()) if dr is None else dr
        noise = SpectralNoise.draw(rng, A, dr, kernel.rank)
    elif noise.modes != kernel.rank:
        raise ConsistencyError("noise mode count differs from kernel rank")
    qs = unique_canonical(q)
    load = kernel.loadings(qs)
    Bm, bm = fbm_spectral(H, z, noise)
    B = FieldSample(z, qs, Bm.values @ load.T, "bH_spectral", noise)
    b = FieldSample(z, qs, bm.values @ load.T, "bH_derivative", noise)
    return BHField(B, b, noise, load, H)


def field_WH(measure: AtomicMeasure, bh: FieldSample, x, sigma_H: float) -> np.ndarray:
    """W(z, x) = sigma_H * sum over atoms and mirrors of weight * exp(-i q.x) * B(z, q)."""
    x = as_wavevectors(x)
    modes = measure.full_weights[:, None] * np.exp(-1j * (measure.full_q @ x.T))
    W = sigma_H * bh.at(measure.full_q) @ modes
    scale = max(1.0, float(np.max(np.abs(W.real))))
    if np.max(np.abs(W.imag)) > 1e-10 * scale:
        raise ConsistencyError("W has an imaginary residue; atom list not mirror-closed")
    return W.real
