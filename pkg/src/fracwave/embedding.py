"""Circulant embedding of stationary Gaussian sequences on a uniform grid."""

import numpy as np


class EmbeddingError(RuntimeError):
    pass


def circulant_eigenvalues(acov: np.ndarray) -> np.ndarray:
    """Eigenvalues of the minimal circulant (size 2(n-1)) whose first row embeds acov[0..n-1]."""
    row = np.concatenate([acov, acov[-2:0:-1]])
    return np.fft.fft(row).real


def negative_mass(eig: np.ndarray) -> float:
    """Fraction of the absolute spectral mass carried by negative eigenvalues."""
    return float(-eig[eig < 0].sum() / np.abs(eig).sum())


class CirculantSampler:
    """Draws stationary Gaussian sequences of length n with autocovariance acov_fn(lag * dz).

    The grid is padded to pad*n points, pad doubling from start_pad, until the
    negative part of the circulant spectrum carries less than neg_tol of its
    mass; the negative eigenvalues are then set to zero. Padding stops at
    max_pad, or at max_size lags for short grids whose physical window is
    small compared with the correlation range.
    """

    def __init__(self, acov_fn, n: int, dz: float, start_pad: int = 8, max_pad: int = 32,
                 neg_tol: float = 5e-4, max_size: int = 2**20):
        self.n = n
        self.dz = dz
        pad = start_pad
        while True:
            m = max(pad * n, n + 1)
            eig = circulant_eigenvalues(np.asarray(acov_fn(np.arange(m) * dz), dtype=float))
            mass = negative_mass(eig)
            if mass <= neg_tol:
                break
            if pad >= max_pad and 2 * pad * n > max_size:
                raise EmbeddingError(
                    f"circulant embedding still indefinite at padding x{pad} "
                    f"(negative mass {mass:.2e} > {neg_tol:.1e})")
            pad *= 2
        self.pad = pad
        self.negative_mass = mass
        self.size = eig.size
        self._sqrt_eig = np.sqrt(np.clip(eig, 0.0, None) / eig.size)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """count independent sequences, shape (count, n)."""
        out = np.empty((count, self.n))
        pairs = (count + 1) // 2
        noise = rng.standard_normal((pairs, self.size)) + 1j * rng.standard_normal((pairs, self.size))
        y = np.fft.fft(self._sqrt_eig * noise, axis=1)[:, : self.n]
        both = np.empty((2 * pairs, self.n))
        both[0::2] = y.real
        both[1::2] = y.imag
        out[:] = both[:count]
        return out
