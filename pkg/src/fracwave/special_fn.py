"""Hermite machinery, the nonlinearity Theta and the analytic constants of the model.

Hermite polynomials here are the probabilists' ones, orthogonal for the
standard Gaussian density g(u) = exp(-u^2/2)/sqrt(2 pi), with
<H_l, H_m> = l! delta_lm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special

FAMILIES = ("sine", "cubic", "identity", "tabulated")


class QuadratureError(RuntimeError):
    """Raised when Gauss-Hermite quadrature does not stabilise within the node budget."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved tolerance {achieved:.3e})")
        self.achieved = achieved


class DegenerateNonlinearity(ValueError):
    """Theta_1 = 0: the first Hermite coefficient vanishes and the limit model collapses."""


def hermite_eval(l: int, u):
    """H_l(u) by the three-term recurrence H_{l+1} = u H_l - l H_{l-1}."""
    if l < 0:
        raise ValueError("Hermite degree must be nonnegative")
    u = np.asarray(u, dtype=float)
    prev = np.ones_like(u)
    if l == 0:
        return prev if prev.ndim else float(prev)
    cur = u.copy()
    for j in range(1, l):
        prev, cur = cur, u * cur - j * prev
    return cur if cur.ndim else float(cur)


def _normalized_hermite_table(l_max: int, u: np.ndarray) -> np.ndarray:
    """Rows h_l(u) = H_l(u)/sqrt(l!) for l = 0..l_max (stable for large u and l)."""
    table = np.empty((l_max + 1, u.size))
    table[0] = 1.0
    if l_max >= 1:
        table[1] = u
    for l in range(1, l_max):
        table[l + 1] = (u * table[l] - math.sqrt(l) * table[l - 1]) / math.sqrt(l + 1)
    return table


def gauss_hermite(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights integrating against the standard Gaussian density."""
    nodes, weights = special.roots_hermitenorm(n)
    return nodes, weights / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class ThetaSpec:
    """Odd nonlinearity Theta with its cached Hermite coefficients Theta_1..Theta_lmax.

    `coeffs[l-1]` holds Theta_l = <H_l, Theta> against the Gaussian density.
    `derivative_bound` is C_Theta in sup|Theta^(l)| <= C_Theta^l; it is inf for
    families that do not satisfy the bound (cubic, identity) and nan for
    tabulated input, which cannot be certified.
    """

    family: str
    params: tuple = ()
    coeffs: np.ndarray = field(default=None, repr=False, compare=False)
    derivative_bound: float = float("nan")

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown Theta family {self.family!r}; expected one of {FAMILIES}")

    @classmethod
    def sine(cls, a: float = 1.0, l_max: int = 32) -> "ThetaSpec":
        # Theta_l = a^l exp(-a^2/2) sin(l pi/2) is recovered by quadrature below.
        proto = cls("sine", (float(a),), None, abs(float(a)))
        return proto.with_coeffs(l_max)

    @classmethod
    def cubic(cls, l_max: int = 32) -> "ThetaSpec":
        return cls("cubic", (), None, math.inf).with_coeffs(l_max)

    @classmethod
    def identity(cls, l_max: int = 32) -> "ThetaSpec":
        return cls("identity", (), None, math.inf).with_coeffs(l_max)

    @classmethod
    def tabulated(cls, u, values, l_max: int = 32) -> "ThetaSpec":
        u = np.asarray(u, dtype=float)
        values = np.asarray(values, dtype=float)
        if u.shape != values.shape or u.ndim != 1 or np.any(np.diff(u) <= 0):
            raise ValueError("tabulated Theta needs increasing nodes and matching values")
        return cls("tabulated", (tuple(u), tuple(values)), None, float("nan")).with_coeffs(l_max)

    def with_coeffs(self, l_max: int) -> "ThetaSpec":
        coeffs = hermite_coeffs(self, l_max)
        return ThetaSpec(self.family, self.params, coeffs, self.derivative_bound)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.family == "sine":
            return np.sin(self.params[0] * u)
        if self.family == "cubic":
            return u**3
        if self.family == "identity":
            return u.copy()
        nodes, values = (np.asarray(p) for p in self.params)
        # odd extension outside the table keeps Theta odd and bounded
        return np.interp(u, nodes, values, left=values[0], right=values[-1])

    @property
    def l_max(self) -> int:
        return 0 if self.coeffs is None else len(self.coeffs)

    @property
    def theta1(self) -> float:
        return float(self.coeffs[0])

    def gaussian_second_moment(self, n: int = 256) -> float:
        """<Theta, Theta> against the Gaussian density."""
        nodes, weights = gauss_hermite(n)
        return float(np.sum(weights * self(nodes) ** 2))

    def describe(self) -> str:
        if self.family == "sine":
            return f"sine(a={self.params[0]!r})"
        return self.family


def hermite_coeffs(theta: ThetaSpec, l_max: int, tol: float = 1e-10,
                   start_nodes: int = 64, max_nodes: int = 4096) -> np.ndarray:
    """(Theta_1, ..., Theta_lmax) by Gauss-Hermite quadrature, doubling nodes until stable.

    Stability is judged on the orthonormal coefficients Theta_l/sqrt(l!), the
    quantities entering the Mehler series; Theta_l itself carries an extra
    sqrt(l!) that amplifies rounding at high l. Odd and even parts of Theta are
    projected separately so an odd Theta gets exactly vanishing even coefficients.
    Orthonormal coefficients below the rounding floor of the quadrature are
    reported as zero rather than as amplified noise.
    """
    if l_max < 1:
        raise ValueError("l_max must be at least 1")
    scale = np.sqrt(special.factorial(np.arange(1, l_max + 1)))
    odd_rows = np.arange(1, l_max + 1) % 2 == 1
    n = start_nodes
    previous: Optional[np.ndarray] = None
    achieved = math.inf
    while n <= max_nodes:
        nodes, weights = gauss_hermite(n)
        plus, minus = theta(nodes), theta(-nodes)
        odd_part, even_part = 0.5 * (plus - minus), 0.5 * (plus + minus)
        if getattr(theta, "family", "tabulated") != "tabulated":
            even_part = np.zeros_like(even_part)  # built-in families are odd by construction
        table = _normalized_hermite_table(l_max, nodes)[1:]
        current = np.where(odd_rows, table @ (weights * odd_part), table @ (weights * even_part))
        if previous is not None:
            achieved = float(np.max(np.abs(current - previous)))
            if achieved < tol:
                floor = 64 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(current))))
                return np.where(np.abs(current) < floor, 0.0, current) * scale
        previous = current
        n *= 2
    raise QuadratureError("Hermite coefficients did not stabilise under node doubling", achieved)


def mehler_covariance(theta: ThetaSpec, r, rhat=1.0, rel_tol: float = 1e-14):
    """E[Theta(X) Theta(Y)] = sum_{l>=1} Theta_l^2/l! (r rhat)^l for unit Gaussians with E[XY] = r rhat.

    Terms are accumulated in l and the sum stops once a nonzero term drops below
    rel_tol of the running sum; vanishing (even) coefficients never stop it.
    """
    x = np.asarray(r, dtype=float) * np.asarray(rhat, dtype=float)
    if np.any(np.abs(np.asarray(r)) > 1 + 1e-12):
        raise ValueError("correlation must lie in [-1, 1]")
    total = np.zeros_like(x)
    power = np.ones_like(x)
    for l in range(1, theta.l_max + 1):
        power = power * x
        c = theta.coeffs[l - 1]
        if abs(c) < 1e-12:
            continue
        term = c * c / math.factorial(l) * power
        total = total + term
        if np.all(np.abs(term) <= rel_tol * np.abs(total)):
            break
    return total if total.ndim else float(total)


@dataclass(frozen=True)
class LongRangeLaw:
    """Band-limited long-range correlation r(z) with spectral density 1_{|k|<cutoff} |k|^(hurst_frak-1).

    r(z) = Re 1F1(h; h+1; i cutoff z), so r(0) = 1 and r(z) ~ c_frak z^(-h) with
    c_frak = Gamma(h+1) cos(pi h/2) cutoff^(-h); c_frak is therefore derived.
    """

    hurst_frak: float
    spectral_cutoff: float = 1.0
    c_frak: float = field(init=False)

    def __post_init__(self):
        h = self.hurst_frak
        if not 0.0 < h < 1.0:
            raise ValueError(f"hurst_frak must lie in the open interval (0, 1), got {h}")
        if self.spectral_cutoff <= 0:
            raise ValueError("spectral_cutoff must be positive")
        c = math.gamma(h + 1.0) * math.cos(math.pi * h / 2.0) / self.spectral_cutoff**h
        object.__setattr__(self, "c_frak", c)

    @property
    def hurst(self) -> float:
        return 1.0 - self.hurst_frak / 2.0

    @property
    def s(self) -> float:
        return 2.0 - self.hurst_frak / 2.0

    def correlation(self, z):
        z = np.abs(np.asarray(z, dtype=float))
        out = np.real(special.hyp1f1(self.hurst_frak, self.hurst_frak + 1.0, 1j * self.spectral_cutoff * z))
        return out if out.ndim else float(out)

    def asymptote(self, z):
        return self.c_frak * np.abs(np.asarray(z, dtype=float)) ** (-self.hurst_frak)


@dataclass(frozen=True)
class Constants:
    C_frak: float
    sigma_H: float
    C_H: float
    c_tilde: float
    H: float
    s: float


def hurst_constant(H: float) -> float:
    """C_H = H Gamma(2H) sin(pi H)/pi, the spectral normalisation of standard fBm."""
    return H * math.gamma(2 * H) * math.sin(math.pi * H) / math.pi


def constants(theta: ThetaSpec, law: LongRangeLaw) -> Constants:
    """C_frak = c_frak Theta_1^2, sigma_H, C_H and c_tilde for the given model."""
    t1 = theta.theta1
    if abs(t1) < 1e-14:
        raise DegenerateNonlinearity("Theta_1 = 0: the nonlinearity has no first Hermite component")
    H = law.hurst
    C_frak = law.c_frak * t1 * t1
    sigma_H = math.sqrt(C_frak / (H * (2 * H - 1)))
    c_tilde = math.gamma(2 * H - 1) * math.sin(math.pi * H) / math.pi
    return Constants(C_frak, sigma_H, hurst_constant(H), c_tilde, H, law.s)


def first_hermite_integral(theta: Callable, n: int = 256) -> float:
    """Integral of u Theta(u) exp(-u^2/2) du over the real line (equals sqrt(2 pi) Theta_1)."""
    nodes, weights = gauss_hermite(n)
    return float(math.sqrt(2 * math.pi) * np.sum(weights * nodes * theta(nodes)))
