import math

import numpy as np
import pytest
from scipy import integrate

from fracwave.medium import TransverseGrid
from fracwave.pulse import (BandQuadrature, QuadratureCoverageError, source_fields, spectral_energy,
                            synthesize_pulse, time_grid)
from fracwave.solver import SourceSpec, WaveField, initial_condition, to_psi

SRC = SourceSpec(omega0=10, bandwidth=5, width=1.0, L_S=-1.0)
GRID = TransverseGrid(65, 2 * math.pi * 8)
L = 1.0
HALF = 20.0


def homogeneous_fields(src, quad, grid, L):
    out = {}
    for w in quad.nodes:
        phi = initial_condition(src, float(w), grid)
        out[float(w)] = to_psi(WaveField(phi.omega, phi.k, grid, np.array([L]), phi.values, "X"))
    return out


@pytest.fixture(scope="module")
def homogeneous():
    quad = BandQuadrature.for_source(SRC, 2 * HALF)
    t = time_grid(SRC, HALF)
    fields = homogeneous_fields(SRC, quad, GRID, L)
    source = source_fields(SRC, quad, GRID)
    return quad, t, fields, source


def test_single_mode_single_frequency_is_a_cosine():
    quad = BandQuadrature(np.array([7.0]), np.array([1.0]), (7.0, 7.0))
    field = np.zeros(GRID.n, dtype=complex)
    field[GRID.n // 2] = 1.0
    t = np.linspace(-3, 3, 61)
    x = np.array([-1.0, 0.0, 2.5])
    p = synthesize_pulse({7.0: field}, t, x, quad=quad, grid=GRID)
    expect = 2 * np.cos(7.0 * t) * GRID.dkappa
    assert np.allclose(p.values, expect[:, None], atol=1e-15)


def test_quadrature_node_count_scales_with_window():
    a = BandQuadrature.for_source(SRC, 40.0)
    b = BandQuadrature.for_source(SRC, 80.0)
    assert b.nodes.size >= 2 * a.nodes.size - 1
    assert np.sum(a.weights) == pytest.approx(2 * SRC.bandwidth, rel=1e-14)
    assert BandQuadrature.for_source(SRC, 0.1).nodes.size == 32


def test_homogeneous_pulse_against_free_propagation_integral():
    # p(t, x) = 2 Re int_band e^{-i w t} (1/2) a(w) G(x; w) dw with G the Fresnel profile over L - L_S
    wide = TransverseGrid(129, 2 * math.pi * 4)
    quad = BandQuadrature.for_source(SRC, 2 * HALF)
    fields = homogeneous_fields(SRC, quad, wide, L)
    t = np.array([-1.5, -0.4, 0.0, 0.3, 2.0, 6.0])
    x = np.array([0.0, 0.7, -2.0])
    p = synthesize_pulse(fields, t, x, quad=quad, grid=wide)
    d = L - SRC.L_S

    def integrand(w, ti, xi):
        a = SRC.width**2 + 1j * d / SRC.k(w)
        g = np.sqrt(2 * math.pi / a) * np.exp(-xi**2 / (2 * a))
        amp = SRC.spectrum(w, np.zeros((1, 1)))[0].real
        return (np.exp(-1j * w * ti) * 0.5 * amp * g).real

    lo, hi = SRC.band
    for i, ti in enumerate(t):
        for j, xi in enumerate(x):
            ref = 2 * integrate.quad(integrand, lo, hi, args=(ti, xi), epsabs=1e-13, epsrel=1e-12, limit=400)[0]
            assert abs(p.values[i, j] - ref) < 1e-9


def test_homogeneous_energy_is_half_the_source_energy(homogeneous):
    quad, t, fields, source = homogeneous
    out = synthesize_pulse(fields, t, quad=quad, grid=GRID).energy()
    src = synthesize_pulse(source, t, quad=quad, grid=GRID).energy()
    assert out / src == pytest.approx(0.5, rel=1e-6)


def test_time_energy_matches_spectral_energy(homogeneous):
    quad, t, fields, source = homogeneous
    for f in (fields, source):
        e_t = synthesize_pulse(f, t, quad=quad, grid=GRID).energy()
        assert e_t == pytest.approx(spectral_energy(f, quad, GRID), rel=1e-8)


def test_phase_ramp_shifts_the_pulse_in_time(homogeneous):
    quad, t, fields, _ = homogeneous
    shift = 40
    tau = t[shift] - t[0]
    ramped = {w: np.exp(1j * w * tau) * f.final() for w, f in fields.items()}
    p0 = synthesize_pulse(fields, t, quad=quad, grid=GRID).spectrum
    p1 = synthesize_pulse(ramped, t, quad=quad, grid=GRID).spectrum
    assert np.allclose(p1[shift:], p0[:-shift], atol=1e-12 * np.abs(p0).max())


def test_real_pulse_from_conjugate_band(homogeneous):
    quad, _, fields, _ = homogeneous
    p = synthesize_pulse(fields, np.linspace(-2, 2, 9), quad=quad, grid=GRID)
    mirror = p.spectrum[:, ::-1]
    assert np.allclose(p.spectrum, np.conj(mirror), atol=1e-14)


def test_missing_frequency_nodes_are_reported(homogeneous):
    quad, t, fields, _ = homogeneous
    partial = dict(list(fields.items())[1:])
    with pytest.raises(QuadratureCoverageError, match="missing"):
        synthesize_pulse(partial, t[:5], quad=quad, grid=GRID)
    plain = {w: f.final() for w, f in fields.items()}
    with pytest.raises(ValueError):
        synthesize_pulse(plain, t[:5], quad=quad)
