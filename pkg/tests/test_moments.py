import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracwave.fbm import default_dr, field_BH
from fracwave.medium import (KernelSpec, MeasureSpec, TransverseGrid, build_kernel, longitudinal_sampler,
                             sample_measure)
from fracwave.moments import (MomentSpec, double_factorial, enumerate_pairings, inner, iterated_integral,
                              mc_medium_moment, moment_envelope, ordered_volume, pair_square_integral,
                              pairing_moment, second_moment_finite_eps, wick_moment_XA)
from fracwave.solver import BudgetError, SourceSpec, born_term, initial_condition
from fracwave.special_fn import LongRangeLaw, ThetaSpec, constants
from fracwave.streams import stream


@pytest.mark.parametrize("n, count", [(2, 1), (4, 3), (6, 15), (8, 105)])
def test_pairing_counts(n, count):
    pairings, odd = enumerate_pairings(n)
    assert not odd and len(pairings) == count == double_factorial(n - 1)
    assert len({p.pairs for p in pairings}) == count


def test_odd_pairings_flag_zero_and_budget():
    assert enumerate_pairings(5) == ([], True)
    assert pairing_moment(3, 0.5, 1.0).value == 0.0
    with pytest.raises(BudgetError):
        enumerate_pairings(14)


@given(st.floats(0.05, 0.95), st.floats(0.1, 3.0))
def test_second_order_closed_form_is_half_the_square_integral(h, z):
    from scipy import integrate

    # int_0^z (z - t) t^-h dt over the ordered triangle, singular weight handled by the algebraic rule
    quad, _ = integrate.quad(lambda t: z - t, 0, z, weight="alg", wvar=(-h, 0.0))
    assert pairing_moment(2, h, 1.0, z).value == pytest.approx(quad, rel=1e-9)
    assert pair_square_integral(h, z) == pytest.approx(2 * quad, rel=1e-9)


def test_vanishing_exponent_gives_ordered_volume_per_pairing():
    for n in (2, 4, 6):
        v = pairing_moment(n, 1e-9, 1.0).value
        assert v == pytest.approx(double_factorial(n - 1) * ordered_volume(n), rel=1e-7)
    assert pairing_moment(4, 1e-9, 1.0).value == pytest.approx(3 / 24, rel=1e-7)


def test_fourth_order_importance_sampling_against_plain_monte_carlo():
    # h = 0.3 keeps the plain estimator's variance finite; distinct Rhat entries force sampling
    h = 0.3
    R = np.array([[1.0, 0.8, 0.5, 0.2], [0.8, 1.0, 0.6, 0.3], [0.5, 0.6, 1.0, 0.9], [0.2, 0.3, 0.9, 1.0]])
    est = pairing_moment(4, h, R, rng=np.random.default_rng(5), tol=2e-3)
    rng = np.random.default_rng(6)
    vals = []
    for _ in range(20):
        u = -np.sort(-rng.random((200000, 4)), axis=1)
        f = np.zeros(u.shape[0])
        for p in enumerate_pairings(4)[0]:
            f += np.prod([R[a, b] * np.abs(u[:, a] - u[:, b]) ** (-h) for a, b in p.pairs], axis=0)
        vals.append(f.mean() / 24)
    plain, err = np.mean(vals), np.std(vals, ddof=1) / math.sqrt(len(vals))
    assert abs(est.zscore(plain, err)) < 3


def test_weight_function_is_applied_on_ordered_points():
    # weight u_1 (the largest point): int over ordered pairs of u |u - v|^-h = z^(3-h) / ((1-h)(3-h))
    h = 0.5
    est = pairing_moment(2, h, np.array([[1.0, 1.0], [1.0, 1.0]]), weight=lambda s: s[:, 0],
                         rng=np.random.default_rng(1), tol=2e-3)
    exact = 1 / ((1 - h) * (3 - h))
    assert abs(est.zscore(exact)) < 3


def test_iterated_integral_of_constants():
    z = np.linspace(0, 2, 401)
    vals = np.full((1, z.size, 3), 1.5)
    assert iterated_integral(vals, z)[0] == pytest.approx(1.5**3 * ordered_volume(3, 2.0), rel=1e-4)  # nested trapezoid, O(dz^2)


def theta_paths(eps, replicas, n, seed, h=0.5):
    law = LongRangeLaw(h)
    z = np.linspace(0, 1, int(math.ceil(1 / (eps * 0.05))) + 1)
    sampler = longitudinal_sampler(law, z.size, (z[1] - z[0]) / eps)
    th = ThetaSpec.sine(1.0)(sampler.sample(np.random.default_rng(seed), replicas))
    return z, np.repeat(th[:, :, None], n, axis=2)


def test_odd_medium_moment_vanishes():
    z, paths = theta_paths(0.1, 1000, 3, 1)
    est = mc_medium_moment(paths, z, 0.1, 0.5)
    assert abs(est.value) < 3 * est.stderr


def test_medium_moment_needs_an_ensemble():
    z, paths = theta_paths(0.1, 50, 2, 2)
    with pytest.raises(ValueError):
        mc_medium_moment(paths, z, 0.1, 0.5)


def test_second_medium_moment_matches_exact_finite_eps_value():
    z, paths = theta_paths(0.1, 2000, 2, 3)
    est = mc_medium_moment(paths, z, 0.1, 0.5)
    exact = second_moment_finite_eps(ThetaSpec.sine(1.0), LongRangeLaw(0.5), 0.1)
    assert abs(est.zscore(exact)) < 3


def test_cross_pair_moment_spot_check():
    # B(., p1), B(., p2) with Rhat(p1, p2) = rho: xi1 and rho xi1 + sqrt(1 - rho^2) xi2 share the law
    kern = build_kernel(KernelSpec("gaussian", 1.0, 1.0), 32)
    rho = float(kern.covariance(np.array([[0.25]]), np.array([[0.75]]))[0, 0])
    h, eps = 0.5, 0.1
    law = LongRangeLaw(h)
    theta = ThetaSpec.sine(1.0)
    z = np.linspace(0, 1, int(math.ceil(1 / (eps * 0.05))) + 1)
    sampler = longitudinal_sampler(law, z.size, (z[1] - z[0]) / eps)
    rng = np.random.default_rng(9)
    x1, x2 = sampler.sample(rng, 1500), sampler.sample(rng, 1500)
    paths = np.stack([theta(x1), theta(rho * x1 + math.sqrt(1 - rho**2) * x2)], axis=2)
    est = mc_medium_moment(paths, z, eps, h)

    def exact(e, points=200001):
        from scipy import integrate

        from fracwave.special_fn import mehler_covariance

        t = np.linspace(0, 1, points)
        return e ** (-h) * integrate.simpson((1 - t) * mehler_covariance(theta, law.correlation(t / e), rhat=rho), x=t)

    assert abs(est.zscore(exact(eps))) < 3
    limit = constants(theta, law).C_frak * pairing_moment(2, h, rho).value
    gaps = [abs(exact(e) - limit) for e in (eps, 0.03, 0.01)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_scaled_moments_respect_envelope():
    C = constants(ThetaSpec.sine(1.0), LongRangeLaw(0.5))
    c = math.sqrt(C.C_frak * pair_square_integral(0.5, 1.0))
    for eps in (0.2, 0.1, 0.05):
        for n in (2, 4):
            z, paths = theta_paths(eps, 500, n, 4)
            est = mc_medium_moment(paths, z, eps, 0.5)
            assert abs(est.value) + 3 * est.stderr <= moment_envelope(n, c)


# ---------------------------------------------------------------- Isserlis moments

THETA = ThetaSpec.sine(1.0)
CONST = constants(THETA, LongRangeLaw(0.5))
GRID = TransverseGrid(33, 2 * math.pi * 4)
SRC = SourceSpec(omega0=10, bandwidth=5, width=1.0, L_S=-1.0)
KERN = build_kernel(KernelSpec("gaussian", 1.0, 1.0), 32)


def wick_setup(seed):
    rng = stream(seed, "wick-test")
    m = sample_measure(MeasureSpec(3, 0.1, radius=1.0, cap=0.7), GRID, rng)
    phi = initial_condition(SRC, 10.0, GRID)
    bh = field_BH(KERN, CONST.H, 4.0, np.array([0.0, 1.0]), m.full_q, rng)
    return m, phi, bh


def test_wick_low_orders():
    m, phi, bh = wick_setup(1)
    test = phi.values[0]
    zero = wick_moment_XA(MomentSpec((0,)), bh, m, phi, test, 1.0, CONST.sigma_H)
    assert zero == pytest.approx(inner(phi.values[0], test, GRID), rel=1e-14)
    assert wick_moment_XA(MomentSpec((1,)), bh, m, phi, test, 1.0, CONST.sigma_H) == 0
    assert wick_moment_XA(MomentSpec((2,), (1,)), bh, m, phi, test, 1.0, CONST.sigma_H) == 0
    with pytest.raises(BudgetError):
        wick_moment_XA(MomentSpec((8,), (6,)), bh, m, phi, test, 1.0, CONST.sigma_H)


def test_wick_second_order_against_born_term_ensemble():
    m, phi, bh0 = wick_setup(2)
    test = phi.values[0]
    w = wick_moment_XA(MomentSpec((2,), nodes=24), bh0, m, phi, test, 1.0, CONST.sigma_H)
    dr = default_dr(4.0, 1.0)
    vals = []
    for r in range(400):
        bh = field_BH(KERN, CONST.H, 4.0, np.array([0.0, 1.0]), m.full_q, stream(2, "wick-mc", r), dr=dr)
        vals.append(inner(born_term(2, bh, m, phi, 1.0, CONST.sigma_H).values[0], test, GRID))
    vals = np.array(vals)
    se = np.hypot(vals.real.std(ddof=1), vals.imag.std(ddof=1)) / math.sqrt(vals.size)
    assert abs(vals.mean() - w) < 3 * se
    assert abs(w) > 3 * se  # the comparison is not vacuous
