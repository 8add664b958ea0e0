import math

import numpy as np
import pytest

from fracwave.fbm import field_BH
from fracwave.frac_calculus import HolderPath, stieltjes_integral
from fracwave.medium import AtomicMeasure, KernelSpec, MeasureSpec, TransverseGrid, build_kernel, sample_measure
from fracwave.solver import (BudgetError, ConfigurationError, SourceSpec, StepError, band_check, born_series,
                             born_term, conservation_report, initial_condition, lattice_norm, solve_regularized,
                             to_psi, from_psi, WaveField)
from fracwave.special_fn import LongRangeLaw, ThetaSpec, constants
from fracwave.streams import stream

C = constants(ThetaSpec.sine(1.0), LongRangeLaw(0.5))
GRID = TransverseGrid(65, 2 * math.pi * 8)
SRC = SourceSpec(omega0=10, bandwidth=5, width=1.0, L_S=-1.0)
WIDE = TransverseGrid(129, 2 * math.pi * 4)  # kappa up to 16: the Gaussian source is resolved to roundoff
KERN = build_kernel(KernelSpec("gaussian", 1.0, 1.0), 32)


def medium(seed, weight=0.3, grid=GRID):
    rng = stream(seed, "solver-test")
    m = sample_measure(MeasureSpec(3, weight, radius=1.0, cap=6 * weight), grid, rng)
    bh = field_BH(KERN, C.H, 4.0, np.linspace(0, 1, 11), m.full_q, rng)
    return m, bh


def fresnel(x, width, distance, k):
    """int exp(-i kappa x) exp(-kappa^2 width^2 / 2) exp(-i kappa^2 distance / (2k)) dkappa."""
    a = width**2 + 1j * distance / k
    return np.sqrt(2 * math.pi / a) * np.exp(-(x**2) / (2 * a))


def test_band_check():
    rep = band_check(SRC)
    assert rep.even and rep.gap
    assert rep.band_edges[0] >= 5 and rep.band_edges[1] <= 15
    dc = SourceSpec(fhat=lambda w, k: np.exp(-w**2) * np.ones(len(k)))
    with pytest.raises(ConfigurationError):
        band_check(dc)
    lopsided = SourceSpec(fhat=lambda w, k: (np.exp(-(w - 10) ** 2) if w > 0 else 0.0) * np.ones(len(k)))
    with pytest.raises(ConfigurationError):
        band_check(lopsided)


def test_initial_condition_without_offset_is_half_source():
    src = SourceSpec(L_S=0.0)
    phi = initial_condition(src, 11.0, GRID)
    assert np.allclose(phi.values[0], 0.5 * src.spectrum(11.0, GRID.kappa_points()))


def test_initial_condition_norm_is_half_source_norm():
    phi = initial_condition(SRC, 9.0, GRID)
    full = lattice_norm(SRC.spectrum(9.0, GRID.kappa_points()), GRID)
    assert lattice_norm(phi.values[0], GRID) == pytest.approx(0.5 * full, rel=1e-14)


def test_initial_condition_fresnel_spreading():
    phi = initial_condition(SRC, 8.0, WIDE)
    x = np.linspace(-4, 4, 17)
    amp = 0.5 * float(SRC.spectrum(8.0, np.zeros((1, 1)))[0].real)
    oracle = amp * np.abs(fresnel(x, SRC.width, abs(SRC.L_S), 8.0))
    assert np.allclose(np.abs(phi.x_space(x)[0]), oracle, atol=1e-10)


def test_initial_condition_outside_band_warns():
    with pytest.warns(UserWarning):
        phi = initial_condition(SRC, 1.0, GRID)
    assert np.all(phi.values == 0)


def test_zero_noise_keeps_initial_field():
    m, bh = medium(1)
    phi = initial_condition(SRC, 10.0, GRID)
    tr = solve_regularized(bh, m, phi, 1.0, C.sigma_H, noise_fn=lambda z, q: np.zeros((z.size, len(q))))
    assert np.all(tr.values == phi.values[0])


def test_single_atom_pure_phase():
    m = AtomicMeasure.single(0.3, 0.7, 0.0)
    bh = field_BH(KERN, C.H, 4.0, np.linspace(0, 1, 11), m.full_q, np.random.default_rng(3))
    phi = initial_condition(SRC, 10.0, GRID)
    tr = solve_regularized(bh, m, phi, 1.0, C.sigma_H, dz=1e-3, store_every=100)
    B = field_BH(KERN, C.H, 4.0, tr.z, m.full_q, None, noise=bh.noise).B.at(np.zeros((1, 1)))[:, 0]
    expect = phi.values[0][None, :] * np.exp(1j * phi.k * C.sigma_H * 2 * 0.3 * 0.7 * B)[:, None]
    assert np.max(np.abs(tr.values - expect)) < 1e-9


def test_conservation_at_default_step():
    m, bh = medium(2)
    tr = solve_regularized(bh, m, initial_condition(SRC, 10.0, GRID), 1.0, C.sigma_H)
    rep = conservation_report(tr)
    assert rep.drift_per_unit_z < 1e-8


def test_drift_shrinks_under_step_halving():
    m, bh = medium(3)
    phi = initial_condition(SRC, 10.0, GRID)
    d = [conservation_report(solve_regularized(bh, m, phi, 1.0, C.sigma_H, dz=h)).max_drift for h in (0.01, 0.005)]
    assert d[0] / d[1] >= 16


def test_broken_mirror_symmetry_breaks_conservation():
    m, bh = medium(4)
    phi = initial_condition(SRC, 10.0, GRID)

    def lopsided(z, q):
        vals = bh.derivative_at(z, q)
        vals[:, len(q) // 2:] *= 1.5
        return vals

    good = conservation_report(solve_regularized(bh, m, phi, 1.0, C.sigma_H)).max_drift
    bad = conservation_report(solve_regularized(bh, m, phi, 1.0, C.sigma_H, noise_fn=lopsided)).max_drift
    assert bad > 1e3 * max(good, 1e-12) and bad > 1e-4


def test_step_too_coarse():
    m, bh = medium(5)
    with pytest.raises(StepError):
        solve_regularized(bh, m, initial_condition(SRC, 10.0, GRID), 1.0, C.sigma_H, dz=0.5)


def test_constant_field_has_no_drift():
    phi = initial_condition(SRC, 10.0, GRID)
    traj = WaveField(10.0, 10.0, GRID, np.linspace(0, 1, 5), np.repeat(phi.values, 5, axis=0))
    assert conservation_report(traj).max_drift == 0.0


def test_psi_transform_properties():
    m, bh = medium(6)
    phi = initial_condition(SRC, 10.0, GRID)
    tr = solve_regularized(bh, m, phi, 1.0, C.sigma_H, store_every=50)
    psi = to_psi(tr)
    assert np.array_equal(psi.values[0], tr.values[0])
    assert np.allclose(psi.norms(), tr.norms(), rtol=1e-14)
    assert np.allclose(from_psi(psi).values, tr.values)


def test_free_evolution_of_psi():
    phi = initial_condition(SRC, 12.0, WIDE)
    z = np.array([0.0, 0.5, 2.0])
    xf = WaveField(12.0, 12.0, WIDE, z, np.repeat(phi.values, 3, axis=0))
    x = np.linspace(-3, 3, 13)
    amp = 0.5 * float(SRC.spectrum(12.0, np.zeros((1, 1)))[0].real)
    field = to_psi(xf).x_space(x)
    for i, zi in enumerate(z):
        assert np.allclose(field[i], amp * fresnel(x, SRC.width, zi - SRC.L_S, 12.0), atol=1e-10)


def test_born_zero_order_and_budget():
    m, bh = medium(7)
    phi = initial_condition(SRC, 10.0, GRID)
    assert np.array_equal(born_term(0, bh, m, phi, 1.0, C.sigma_H).values[0], phi.values[0])
    with pytest.raises(BudgetError):
        born_series(bh, m, phi, 1.0, C.sigma_H, 7, budget=6)


def test_first_born_term_mean_zero():
    phi = initial_condition(SRC, 10.0, GRID)
    m, _ = medium(8)
    vals = []
    for r in range(300):
        bh = field_BH(KERN, C.H, 4.0, np.linspace(0, 1, 11), m.full_q, stream(8, "born1", r))
        vals.append(born_term(1, bh, m, phi, 1.0, C.sigma_H).values[0, 32])
    vals = np.array(vals)
    for part in (vals.real, vals.imag):
        assert abs(part.mean()) < 3 * part.std() / math.sqrt(part.size)


def test_born_partial_sums_converge_to_ode():
    m, bh = medium(9, weight=0.05)
    phi = initial_condition(SRC, 10.0, GRID)
    ref = solve_regularized(bh, m, phi, 1.0, C.sigma_H, dz=0.002).final()
    terms = born_series(bh, m, phi, 1.0, C.sigma_H, 5)
    n0 = lattice_norm(phi.values[0], GRID)
    res = [lattice_norm(terms[: n + 1].sum(0) - ref, GRID) / n0 for n in range(6)]
    assert all(b < a for a, b in zip(res, res[1:]))
    # remainder against the C^n / n! envelope with C the coupling strength
    Cn = phi.k * C.sigma_H * m.total_variation * np.max(np.abs(bh.derivative_at(np.linspace(0, 1, 401), m.full_q)))
    for n in range(1, 5):
        assert res[n] <= 2 * Cn ** (n + 1) / math.factorial(n + 1)


def test_solution_map_is_linear_and_gauge_covariant():
    m, bh = medium(10)
    p1 = initial_condition(SRC, 10.0, GRID)
    p2 = initial_condition(SourceSpec(omega0=10, bandwidth=5, width=0.6, L_S=-0.3), 10.0, GRID)
    run = lambda vals: solve_regularized(bh, m, WaveField(10.0, 10.0, GRID, np.zeros(1), vals[None, :]), 1.0,
                                         C.sigma_H, dz=0.01).final()
    a, b = 0.7 - 0.2j, -1.3
    lhs = run(a * p1.values[0] + b * p2.values[0])
    rhs = a * run(p1.values[0]) + b * run(p2.values[0])
    assert np.max(np.abs(lhs - rhs)) < 1e-10 * np.max(np.abs(rhs))
    base = run(p1.values[0])
    # multiplication by i is exact in floating point; a general phase is exact up to rounding
    assert np.array_equal(run(1j * p1.values[0]), 1j * base)
    g = np.exp(0.9j)
    assert np.max(np.abs(run(g * p1.values[0]) - g * base)) < 1e-14 * np.max(np.abs(base))


def test_mild_form_increment_is_the_pathwise_integral():
    # single atom at q = 0: X(z) - phi0 = int_0^z i k sigma_H w0 X(u) dB(u)
    m = AtomicMeasure.single(0.3, 0.7, 0.0)
    bh = field_BH(KERN, C.H, 4.0, np.linspace(0, 1, 11), m.full_q, np.random.default_rng(11))
    phi = initial_condition(SRC, 10.0, GRID)
    tr = solve_regularized(bh, m, phi, 1.0, C.sigma_H, dz=1e-3, store_every=1)
    B = field_BH(KERN, C.H, 4.0, tr.z, m.full_q, None, noise=bh.noise).B.at(np.zeros((1, 1)))[:, 0]
    driver = HolderPath(tr.z, B)
    j = GRID.n // 2
    f = 1j * phi.k * C.sigma_H * m.full_weights.sum().real * tr.values[:, j]
    inc = (stieltjes_integral(HolderPath(tr.z, f.real), driver, 0.3, check=False)
           + 1j * stieltjes_integral(HolderPath(tr.z, f.imag), driver, 0.3, check=False))
    assert abs(inc - (tr.values[-1, j] - phi.values[0, j])) < 1e-6
