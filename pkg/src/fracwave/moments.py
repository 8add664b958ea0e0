"""Gaussian pairings, ordered-domain moment integrals and Isserlis moments of Born terms."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .fbm import BHField, bin_weights
from .medium import AtomicMeasure, TransverseGrid
from .solver import BudgetError, WaveField, coupling_for
from .special_fn import hurst_constant

PAIRING_LIMIT = 12


# ---------------------------------------------------------------- pairings

@dataclass(frozen=True)
class Pairing:
    pairs: tuple  # ((a, b), ...) with a < b, 0-based

    def __post_init__(self):
        flat = [i for p in self.pairs for i in p]
        if sorted(flat) != list(range(len(flat))) or any(a >= b for a, b in self.pairs):
            raise ValueError("not a perfect matching of 0..n-1")

    @property
    def n(self) -> int:
        return 2 * len(self.pairs)


def _matchings(items: tuple):
    if not items:
        yield ()
        return
    first, rest = items[0], items[1:]
    for i, partner in enumerate(rest):
        remaining = rest[:i] + rest[i + 1 :]
        for tail in _matchings(remaining):
            yield ((first, partner),) + tail


def enumerate_pairings(n: int) -> tuple[list, bool]:
    """All (n-1)!! perfect matchings of {0..n-1}, deterministic order, and a zero-moment flag for odd n."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n % 2:
        return [], True
    if n > PAIRING_LIMIT:
        raise BudgetError(f"pairing enumeration limited to n <= {PAIRING_LIMIT}")
    return [Pairing(m) for m in _matchings(tuple(range(n)))], False


def double_factorial(n: int) -> int:
    return math.prod(range(n, 0, -2)) if n > 0 else 1


# ---------------------------------------------------------------- ordered-domain pairing integrals

@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    samples: int = 0

    def zscore(self, other: float, other_err: float = 0.0) -> float:
        return (self.value - other) / math.hypot(self.stderr, other_err) if (self.stderr or other_err) else 0.0


def pair_square_integral(hurst_frak: float, z: float) -> float:
    """int_[0,z]^2 |u - v|^-h du dv = 2 z^(2-h) / ((1-h)(2-h))."""
    h = hurst_frak
    return 2 * z ** (2 - h) / ((1 - h) * (2 - h))


def _pair_distances(rng, hurst_frak: float, z: float, size: int) -> np.ndarray:
    """Distances d on [0, z] with density proportional to d^-h (z - d), by rejection from d^-h."""
    out = np.empty(0)
    while out.size < size:
        m = 2 * (size - out.size) + 16
        d = z * rng.random(m) ** (1 / (1 - hurst_frak))
        keep = rng.random(m) < (z - d) / z
        out = np.concatenate([out, d[keep]])
    return out[:size]


def pairing_moment(n: int, hurst_frak: float, rhat, z: float = 1.0, weight: Optional[Callable] = None,
                   amplitude: float = 1.0, rng: Optional[np.random.Generator] = None, tol: float = 1e-2,
                   batch: int = 20000, max_samples: int = 2_000_000) -> Estimate:
    """amplitude^(n/2) * int over z >= u_1 >= ... >= u_n >= 0 of
    weight(u) * sum over pairings of prod rhat[a, b] |u_a - u_b|^-h.

    Unit weight with constant rhat has the closed form
    (n-1)!! rhat^(n/2) I2^(n/2) / n!, I2 the square integral; otherwise the
    integral is estimated by importance sampling from the pairing mixture
    density (stderr reported). Raises BudgetError if the relative stderr stays
    above tol within max_samples.
    """
    pairings, odd = enumerate_pairings(n)
    if odd:
        return Estimate(0.0, 0.0)
    if not 0.0 < hurst_frak < 1.0:
        raise ValueError("hurst_frak must lie in (0, 1)")
    R = np.broadcast_to(np.asarray(rhat, dtype=float), (n, n)) if n else np.ones((0, 0))
    scale = amplitude ** (n // 2)
    I2 = pair_square_integral(hurst_frak, z)
    if n == 0:
        return Estimate(scale * (1.0 if weight is None else float(weight(np.zeros((1, 0)))[0])), 0.0)
    if weight is None and np.allclose(R, R.flat[1 if n > 1 else 0]):
        val = double_factorial(n - 1) * R.flat[1] ** (n // 2) * I2 ** (n // 2) / math.factorial(n)
        return Estimate(scale * val, 0.0)
    rng = np.random.default_rng(0) if rng is None else rng
    pair_idx = [np.array(p.pairs) for p in pairings]
    total, total_sq, count = 0.0, 0.0, 0
    while True:
        choice = rng.integers(0, len(pairings), batch)
        u = np.empty((batch, n))
        for c, pr in enumerate(pair_idx):
            rows = np.flatnonzero(choice == c)
            if rows.size == 0:
                continue
            for a, b in pr:
                d = _pair_distances(rng, hurst_frak, z, rows.size)
                lo = rng.random(rows.size) * (z - d)
                flip = rng.random(rows.size) < 0.5
                u[rows, a] = np.where(flip, lo + d, lo)
                u[rows, b] = np.where(flip, lo, lo + d)
        # mixture density over the cube, symmetric in the coordinates
        q = np.zeros(batch)
        for pr in pair_idx:
            q += np.prod(np.abs(u[:, pr[:, 0]] - u[:, pr[:, 1]]) ** (-hurst_frak), axis=1)
        q /= len(pairings) * I2 ** (n // 2)
        s = -np.sort(-u, axis=1)  # u_1 >= ... >= u_n
        f = np.zeros(batch)
        for pr in pair_idx:
            f += np.prod(R[pr[:, 0], pr[:, 1]] * np.abs(s[:, pr[:, 0]] - s[:, pr[:, 1]]) ** (-hurst_frak), axis=1)
        if weight is not None:
            f *= weight(s)
        ratio = f / q / math.factorial(n)
        total += ratio.sum()
        total_sq += (ratio**2).sum()
        count += batch
        mean = total / count
        err = math.sqrt(max(total_sq / count - mean**2, 0.0) / count)
        if err <= tol * abs(mean) or count >= max_samples:
            break
    if err > tol * abs(mean):
        raise BudgetError(f"pairing integral stderr {err:.3e} (relative {err / abs(mean):.2e}) above tolerance")
    return Estimate(scale * mean, scale * err, count)


def ordered_volume(n: int, z: float = 1.0) -> float:
    return z**n / math.factorial(n)


# ---------------------------------------------------------------- medium moments

def iterated_integral(values: np.ndarray, z: np.ndarray) -> np.ndarray:
    """int over z_end >= u_1 >= ... >= u_n >= 0 of prod values[..., j](u_j) by nested trapezoid.

    values: (replicas, nz, n) samples on the uniform grid z. Returns (replicas,).
    """
    dz = z[1] - z[0]
    n = values.shape[2]
    inner = np.ones(values.shape[:2])
    for j in range(n - 1, -1, -1):
        integrand = values[:, :, j] * inner
        cum = np.zeros_like(integrand)
        cum[:, 1:] = np.cumsum(0.5 * dz * (integrand[:, 1:] + integrand[:, :-1]), axis=1)
        inner = cum
    return inner[:, -1]


def mc_medium_moment(theta_paths: np.ndarray, z: np.ndarray, eps: float, hurst_frak: float) -> Estimate:
    """eps^(-n h/2) * E[iterated integral of prod Theta(B(u_j/eps, p_j))] with standard error.

    theta_paths: (replicas, nz, n), Theta(B(u/eps, p_j)) sampled at slow coordinates z.
    """
    if theta_paths.shape[0] < 100:
        raise ValueError("medium moment needs at least 100 replicas")
    n = theta_paths.shape[2]
    vals = iterated_integral(theta_paths, z) * eps ** (-n * hurst_frak / 2)
    return Estimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size)), vals.size)


def second_moment_finite_eps(theta, law, eps: float, z: float = 1.0, points: int = 200001) -> float:
    """Exact eps^-h int_{Delta_2(z)} E[Theta(B(u/eps))Theta(B(v/eps))] = eps^-h int_0^z (z - t) Mehler(r(t/eps)) dt."""
    from scipy import integrate

    from .special_fn import mehler_covariance

    t = np.linspace(0.0, z, points)
    f = (z - t) * mehler_covariance(theta, law.correlation(t / eps))
    return float(eps ** (-law.hurst_frak) * integrate.simpson(f, x=t))


def moment_envelope(n: int, C: float) -> float:
    return C**n * n ** (n / 2)


# ---------------------------------------------------------------- Isserlis moments of Born terms

@dataclass(frozen=True)
class MomentSpec:
    """Expectation of prod_i <X^{A, n_i}, phi> * prod_j conj(<X^{A, m_j}, phi>)."""

    unconjugated: tuple = (2,)
    conjugated: tuple = ()
    nodes: int = 32
    budget: int = 12

    def __post_init__(self):
        if len(self.unconjugated) + len(self.conjugated) < 1:
            raise ValueError("a moment needs at least one factor")

    @property
    def total_order(self) -> int:
        return sum(self.unconjugated) + sum(self.conjugated)


def _simplex_rule(order: int, z: float, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre on {z >= u_1 >= ... >= u_order >= 0} via collapsed coordinates."""
    if order == 0:
        return np.zeros((1, 0)), np.ones(1)
    x, w = np.polynomial.legendre.leggauss(nodes)
    x, w = 0.5 * (x + 1), 0.5 * w
    grids = np.meshgrid(*([x] * order), indexing="ij")
    wgrid = np.meshgrid(*([w] * order), indexing="ij")
    t = np.stack([g.ravel() for g in grids], axis=1)
    wt = np.prod(np.stack([g.ravel() for g in wgrid], axis=1), axis=1)
    u = np.empty_like(t)
    u[:, 0] = z * t[:, 0]
    jac = np.full(t.shape[0], z)
    for m in range(1, order):
        u[:, m] = u[:, m - 1] * t[:, m]
        jac = jac * u[:, m - 1]
    return u, wt * jac


def _factor_paths(order: int, coupling, nk: int):
    """Atom-index tuples for one Born factor with their kappa bookkeeping.

    Yields (atoms, target, source, rates): target kappa indices where the whole
    chain stays on the lattice, source index Q_n per target and the free-phase
    rate of each scattering step at those targets.
    """
    n_atoms = sum(len(g) for g in coupling.groups)
    shift_of = np.empty(n_atoms, dtype=int)
    for si, g in enumerate(coupling.groups):
        shift_of[g] = si
    maps = []
    for si in range(len(coupling.groups)):
        m = np.full(nk, -1)
        m[coupling.target[si]] = coupling.source[si]
        r = np.zeros(nk)
        r[coupling.target[si]] = coupling.rate[si]
        maps.append((m, r))
    for atoms in itertools.product(range(n_atoms), repeat=order):
        cur = np.arange(nk)
        ok = np.ones(nk, dtype=bool)
        rates = []
        for a in atoms:
            m, r = maps[shift_of[a]]
            safe = np.where(ok, cur, 0)
            rates.append(np.where(ok, r[safe], 0.0))
            nxt = m[safe]
            ok &= nxt >= 0
            cur = np.where(ok, nxt, 0)
        yield atoms, np.flatnonzero(ok), cur[ok], [rt[ok] for rt in rates]


def pair_kernel_values(H: float, A: float, dr: float, t: np.ndarray) -> np.ndarray:
    r = (np.arange(int(round(A / dr))) + 0.5) * dr
    rho2 = bin_weights(H, r, dr) ** 2 * dr
    out = np.empty(t.shape)
    flat = t.ravel()
    res = np.empty(flat.size)
    for s in range(0, flat.size, 8192):
        res[s : s + 8192] = np.cos(np.multiply.outer(flat[s : s + 8192], r)) @ rho2
    out[...] = res.reshape(t.shape)
    return hurst_constant(H) * 2 * out


def wick_moment_XA(spec: MomentSpec, bh: BHField, measure: AtomicMeasure, phi0: WaveField, test_fn: np.ndarray,
                   L: float, sigma_H: float, max_work: float = 3e8, check_nodes: bool = True) -> complex:
    """Isserlis expectation of products of <X^{A,n}, phi> over the Gaussian noise for a fixed measure.

    Each noise factor b^A(u, q) pairs as E[b(u,q) b(v,q')] = K_A(u - v) Rhat_A(q, q'),
    with K_A the binned spectral pair kernel and Rhat_A the truncated eigen-expansion.
    Simplex integrals use tensor Gauss-Legendre in collapsed coordinates; with
    check_nodes the result is recomputed at 3/2 the node count and a budget
    error raised if they disagree beyond 1e-6 relative.
    """
    T = spec.total_order
    if T > spec.budget:
        raise BudgetError(f"total Born order {T} exceeds budget {spec.budget}")
    if T % 2:
        return 0j
    value = _wick(spec, spec.nodes, bh, measure, phi0, test_fn, L, sigma_H, max_work)
    if check_nodes and T > 0:
        finer = _wick(spec, spec.nodes * 3 // 2, bh, measure, phi0, test_fn, L, sigma_H, max_work * 4)
        if abs(finer - value) > 1e-6 * max(abs(finer), 1e-300):
            raise BudgetError(f"simplex quadrature not converged: {value} vs {finer}")
        value = finer
    return value


def _wick(spec, nodes, bh, measure, phi0, test_fn, L, sigma_H, max_work) -> complex:
    grid, k = phi0.grid, phi0.k
    cell = grid.dkappa**grid.dim
    coupling = coupling_for(measure, grid, k)
    nk = grid.n**grid.dim
    phi_init = phi0.values[0]
    factors = [(n, False) for n in spec.unconjugated] + [(n, True) for n in spec.conjugated]
    T = spec.total_order
    if T == 0:
        val = 1 + 0j
        for n, conj in factors:
            inner = np.sum(phi_init * np.conj(test_fn)) * cell
            val *= np.conj(inner) if conj else inner
        return val
    n_atoms = 2 * measure.q.shape[0]
    rules = [_simplex_rule(n, L, nodes) for n, _ in factors]
    points = math.prod(len(r[1]) for r in rules)
    work = points * n_atoms**T * nk
    if work > max_work:
        raise BudgetError(f"Isserlis quadrature needs ~{work:.2e} operations, budget {max_work:.2e}")
    # joint node set over all factors (outer product of simplex rules)
    mesh = np.meshgrid(*[np.arange(len(r[1])) for r in rules], indexing="ij")
    idx = [m.ravel() for m in mesh]
    U = np.concatenate([rules[f][0][idx[f]] for f in range(len(rules))], axis=1)  # (P, T)
    W = np.prod(np.stack([rules[f][1][idx[f]] for f in range(len(rules))], axis=1), axis=1)
    pairings, _ = enumerate_pairings(T)
    kern = {}
    for p in pairings:
        for a, b in p.pairs:
            if (a, b) not in kern:
                kern[(a, b)] = pair_kernel_values(bh.H, bh.noise.A, bh.noise.dr, U[:, a] - U[:, b])
    load = bh.loadings[bh.B.columns(measure.full_q)]
    rcov = load @ load.T
    weights = measure.full_weights
    # per-factor contributions: for each atom tuple, a (P,) vector of phase-weighted inner products
    per_factor = []
    offset = 0
    for f, (n, conj) in enumerate(factors):
        cols = list(range(offset, offset + n))
        offset += n
        entries = []
        if n == 0:
            inner = np.sum(phi_init * np.conj(test_fn)) * cell
            entries.append(((), np.full(U.shape[0], np.conj(inner) if conj else inner)))
        else:
            for atoms, tgt, src, rates in _factor_paths(n, coupling, nk):
                if tgt.size == 0:
                    continue
                phase = np.zeros((U.shape[0], tgt.size))
                for m, c in enumerate(cols):
                    phase -= np.outer(U[:, c], rates[m])
                amp = (1j * k * sigma_H) ** n * np.prod(weights[list(atoms)])
                vec = np.exp(1j * phase) @ (phi_init[src] * np.conj(test_fn[tgt])) * cell * amp
                entries.append((atoms, np.conj(vec) if conj else vec))
        per_factor.append(entries)
    total = 0j
    for combo in itertools.product(*per_factor):
        atoms = [a for entry in combo for a in entry[0]]
        prod = np.ones(U.shape[0], dtype=complex)
        for entry in combo:
            prod = prod * entry[1]
        cov = np.zeros(U.shape[0])
        for p in pairings:
            term = np.ones(U.shape[0])
            for a, b in p.pairs:
                term = term * kern[(a, b)] * rcov[atoms[a], atoms[b]]
            cov += term
        total += np.sum(W * prod * cov)
    return total


def inner(values: np.ndarray, test_fn: np.ndarray, grid: TransverseGrid) -> complex:
    return complex(np.sum(values * np.conj(test_fn)) * grid.dkappa**grid.dim)
