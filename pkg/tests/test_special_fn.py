import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from fracwave.special_fn import (DegenerateNonlinearity, LongRangeLaw, ThetaSpec, constants, gauss_hermite,
                                 hermite_coeffs, hermite_eval, mehler_covariance)


def gauss(u):
    return np.exp(-u * u / 2) / math.sqrt(2 * math.pi)


def quad_coeff(fn, l):
    return integrate.quad(lambda u: fn(u) * hermite_eval(l, u) * gauss(u), -np.inf, np.inf, limit=200)[0]


def test_hermite_values():
    assert hermite_eval(2, 0.0) == -1
    assert hermite_eval(3, 1.0) == -2


def test_hermite_h4_norm_against_adaptive_quadrature():
    val = integrate.quad(lambda u: hermite_eval(4, u) ** 2 * gauss(u), -np.inf, np.inf)[0]
    assert abs(val - 24) < 1e-10
    u, w = gauss_hermite(40)
    assert abs(np.sum(w * hermite_eval(4, u) ** 2) - 24) < 1e-10


@given(st.integers(0, 12), st.integers(0, 12))
def test_hermite_orthogonality(m, n):
    u, w = gauss_hermite(64)
    val = np.sum(w * hermite_eval(m, u) * hermite_eval(n, u))
    expect = math.factorial(n) if m == n else 0.0
    # rounding scales with the norms, so compare in the orthonormal basis
    assert abs(val - expect) <= 1e-12 * math.sqrt(math.factorial(m) * math.factorial(n))


def test_identity_coefficients():
    c = ThetaSpec.identity(8).coeffs
    assert c[0] == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.abs(c[1:]) < 1e-12)


def test_cubic_coefficients_against_quadrature():
    c = ThetaSpec.cubic(8).coeffs
    for l in range(1, 9):
        assert c[l - 1] == pytest.approx(quad_coeff(lambda u: u**3, l), abs=1e-9)
    assert c[0] == pytest.approx(3.0, abs=1e-12)
    assert c[2] == pytest.approx(6.0, abs=1e-12)
    assert np.all(np.abs(np.delete(c, [0, 2])) < 1e-12)


@given(st.floats(0.1, 2.5))
def test_sine_first_coefficient(a):
    th = ThetaSpec.sine(a, 8)
    oracle = integrate.quad(lambda u: u * math.sin(a * u) * gauss(u), -np.inf, np.inf)[0]
    assert th.theta1 == pytest.approx(oracle, abs=1e-10)
    assert th.theta1 == pytest.approx(a * math.exp(-a * a / 2), abs=1e-12)
    assert np.all(th.coeffs[1::2] == 0.0)


def test_tabulated_matches_builtin_sine():
    u = np.linspace(-12, 12, 20001)
    tab = ThetaSpec.tabulated(u, np.sin(u), 6)
    ref = ThetaSpec.sine(1.0, 6)
    assert np.allclose(tab.coeffs, ref.coeffs, atol=1e-6)


def test_mehler_trivial_cases():
    th = ThetaSpec.identity()
    assert mehler_covariance(th, 0.5, 1.0) == pytest.approx(0.5)
    assert mehler_covariance(th, 0.0, 1.0) == 0.0
    with pytest.raises(ValueError):
        mehler_covariance(th, 1.5)


@given(st.floats(-1, 1), st.floats(0.2, 1.5))
def test_mehler_sine_closed_form(r, a):
    # E[sin(aX) sin(aY)] = exp(-a^2) sinh(a^2 r)
    th = ThetaSpec.sine(a)
    assert mehler_covariance(th, r) == pytest.approx(math.exp(-a * a) * math.sinh(a * a * r), abs=1e-12)


def test_mehler_sine_monte_carlo(rng):
    n, r = 1_000_000, 0.8
    x = rng.standard_normal(n)
    y = r * x + math.sqrt(1 - r * r) * rng.standard_normal(n)
    prod = np.sin(x) * np.sin(y)
    se = prod.std() / math.sqrt(n)
    assert abs(prod.mean() - mehler_covariance(ThetaSpec.sine(1.0), r)) < 3 * se


def _cutoff_for_unit_tail(h):
    return (math.gamma(h + 1) * math.cos(math.pi * h / 2)) ** (1 / h)


def test_constants_identity_unit_tail():
    law = LongRangeLaw(0.5, _cutoff_for_unit_tail(0.5))
    assert law.c_frak == pytest.approx(1.0)
    assert constants(ThetaSpec.identity(), law).C_frak == pytest.approx(1.0, abs=1e-12)


def test_constants_sine_unit_tail():
    law = LongRangeLaw(0.3, _cutoff_for_unit_tail(0.3))
    assert constants(ThetaSpec.sine(1.0), law).C_frak == pytest.approx(math.exp(-1), abs=1e-12)


@pytest.mark.parametrize("h", [0.0, 1.0, -0.2, 1.3])
def test_hurst_frak_must_be_open_interval(h):
    with pytest.raises(ValueError):
        LongRangeLaw(h)


def test_derived_exponents():
    law = LongRangeLaw(0.4)
    assert law.hurst == pytest.approx(0.8)
    assert law.s == pytest.approx(1.8)
    c = constants(ThetaSpec.sine(), law)
    assert c.sigma_H == pytest.approx(math.sqrt(c.C_frak / (c.H * (2 * c.H - 1))))


def test_degenerate_nonlinearity():
    th = ThetaSpec.cubic()
    flat = ThetaSpec(th.family, th.params, np.array([0.0, 0.0, 6.0]), th.derivative_bound)
    with pytest.raises(DegenerateNonlinearity):
        constants(flat, LongRangeLaw(0.5))


@given(st.floats(0.1, 0.9), st.floats(0.0, 40.0))
def test_correlation_matches_spectral_integral(h, z):
    law = LongRangeLaw(h)
    # normalised spectral density h |k|^(h-1) on (0, 1)
    oracle = h * integrate.quad(lambda k: k ** (h - 1) * math.cos(k * z), 0, 1, limit=400)[0]
    assert law.correlation(z) == pytest.approx(oracle, abs=1e-7)
    assert law.correlation(-z) == law.correlation(z)


def test_correlation_tail():
    law = LongRangeLaw(0.5)
    z = np.pi * np.array([200.0, 800.0])
    ratio = law.correlation(z) / law.asymptote(z)
    assert np.all(np.abs(ratio - 1) < 0.02)
    assert law.correlation(0.0) == pytest.approx(1.0)


def test_hermite_coeffs_rejects_bad_order():
    with pytest.raises(ValueError):
        hermite_coeffs(ThetaSpec.identity(), 0)
