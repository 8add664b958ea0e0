"""Experiment pipelines, artifact layout and plot-data views.

Every pipeline writes into <out>/<subcommand>/ and finishes with a manifest
listing each file with its sha256 and seed lineage. Replica tasks are pure
functions of (config text, seed, replica) so they can run on a process pool
without changing a single output byte.
"""

from __future__ import annotations

import math
import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import artifacts
from .config import ExperimentConfig
from .fbm import default_dr, fbm_exact, fbm_spectral, field_BH, increment_variance, SpectralNoise
from .frac_calculus import HolderPath, holder_exponent, lambda_alpha
from .medium import (AtomicMeasure, KernelSpec, MeasureSpec, TransverseGrid, build_kernel, fit_decay_exponent,
                     autocovariance, longitudinal_sampler, sample_bfrak, sample_measure, synthesize_V)
from .mode_coupling import EpsRegime, fast_grid, sweep_point
from .moments import (MomentSpec, double_factorial, enumerate_pairings, inner, mc_medium_moment, pairing_moment,
                      second_moment_finite_eps, wick_moment_XA)
from .pulse import BandQuadrature, spectral_energy, synthesize_pulse, time_grid
from .solver import (BudgetError, SourceSpec, WaveField, born_series, conservation_report, initial_condition,
                     lattice_norm, solve_regularized, to_psi)
from .special_fn import gauss_hermite, hermite_eval
from .streams import stream

SUBCOMMANDS = ("medium", "fbm", "solve", "modes", "moments", "pulse", "verify")
VIEWS = {
    "medium-realization": "medium",
    "autocov-decay": "medium",
    "fbm-paths": "fbm",
    "conservation": "solve",
    "eps-sweep": "modes",
    "pulse": "pulse",
}
OUT_ENV = "FRACWAVE_OUT"


class ArtifactError(RuntimeError):
    pass


# ---------------------------------------------------------------- shared builders

@lru_cache(maxsize=8)
def _config(text: str) -> ExperimentConfig:
    return ExperimentConfig.from_text(text)


def _grid(cfg):
    return TransverseGrid(cfg.numerics.grid_n, cfg.numerics.grid_length)


@lru_cache(maxsize=8)
def _kernel(kind, length, radius, nodes):
    return build_kernel(KernelSpec(kind, length, radius), nodes)


def _medium_kernel(cfg, radius=None):
    m = cfg.medium
    return _kernel(m.kernel, m.kernel_length, m.measure_radius if radius is None else radius, m.kernel_nodes)


def _measure_spec(cfg):
    m = cfg.medium
    return MeasureSpec(m.n_atoms, m.atom_weight, m.amplitude, m.measure_radius, m.cap)


def _source(cfg):
    p = cfg.physical
    return SourceSpec(p.omega0, p.bandwidth, p.source_width, p.L_S, p.c0)


@lru_cache(maxsize=8)
def _sampler(hurst_frak, cutoff, n, dz):
    from .special_fn import LongRangeLaw

    return longitudinal_sampler(LongRangeLaw(hurst_frak, cutoff), n, dz)


def _medium_z(cfg):
    return np.arange(cfg.numerics.medium_nz) * cfg.numerics.medium_dz


def _solve_dz(cfg):
    return cfg.numerics.dz or None


# ---------------------------------------------------------------- replica tasks

def _medium_task(text, seed, r):
    cfg = _config(text)
    rng = stream(seed, "medium", r)
    grid = _grid(cfg)
    m = sample_measure(_measure_spec(cfg), grid, rng)
    z = _medium_z(cfg)
    sampler = _sampler(cfg.medium.hurst_frak, cfg.medium.spectral_cutoff, z.size, cfg.numerics.medium_dz)
    b = sample_bfrak(_medium_kernel(cfg), cfg.law(), z, m.full_q, rng, sampler)
    x = grid.axis if r == 0 else np.array([0.0])
    V = synthesize_V(m, b, cfg.theta(), x)
    j0 = int(np.argmin(np.abs(x)))
    return V.v_real[:, j0], (V.v_real if r == 0 else None), V.imag_residue


def _solve_task(text, seed, r):
    cfg = _config(text)
    rng = stream(seed, "solve", r)
    grid = _grid(cfg)
    m = sample_measure(_measure_spec(cfg), grid, rng)
    C = cfg.constants()
    L = cfg.physical.L
    bh = field_BH(_medium_kernel(cfg), C.H, cfg.numerics.A, np.linspace(0, L, 11), m.full_q, rng)
    src = _source(cfg)
    phi = initial_condition(src, src.omega0, grid)
    tr = solve_regularized(bh, m, phi, L, C.sigma_H, dz=_solve_dz(cfg))
    born = None
    if r == 0:
        born = _born_residuals(cfg, bh, m, phi, tr)
    return tr.z, tr.norms(), tr.final(), born


def _born_residuals(cfg, bh, m, phi, tr):
    C = cfg.constants()
    L = cfg.physical.L
    n0 = lattice_norm(phi.values[0], phi.grid)
    ref = solve_regularized(bh, m, phi, L, C.sigma_H, dz=(tr.z[1] - tr.z[0]) / 4)
    try:
        terms = born_series(bh, m, phi, L, C.sigma_H, cfg.numerics.n_max)
    except BudgetError:
        return [(n, math.nan) for n in range(cfg.numerics.n_max + 1)]
    return [(n, lattice_norm(terms[: n + 1].sum(0) - ref.final(), phi.grid) / n0) for n in range(terms.shape[0])]


def _modes_setup(cfg):
    g = cfg.regime
    grid = TransverseGrid(g.grid_n, g.grid_length)
    src = SourceSpec(g.omega0, g.bandwidth, g.source_width, g.L_S, cfg.physical.c0)
    spec = MeasureSpec(cfg.medium.n_atoms, g.atom_weight, cfg.medium.amplitude, g.measure_radius, g.cap)
    return grid, src, spec


def _modes_task(text, seed, r):
    cfg = _config(text)
    grid, src, spec = _modes_setup(cfg)
    g = cfg.regime
    kern = _medium_kernel(cfg, g.measure_radius)
    rows = []
    for eps in g.eps:
        reg = EpsRegime(eps, cfg.medium.hurst_frak)
        zf, _, _ = fast_grid(reg, src.k(g.omega), cfg.physical.L)
        rng = stream(seed, "modes", r)
        m = sample_measure(spec, grid, rng)
        b = sample_bfrak(kern, cfg.law(), zf, m.full_q, rng)
        rows.append(sweep_point(reg, m, b, cfg.theta(), src, g.omega, grid, cfg.physical.L, seed))
    return rows


def _pulse_fields(cfg, quad, grid, src, medium=None):
    L = cfg.physical.L
    fields = {}
    for w in quad.nodes:
        phi = initial_condition(src, float(w), grid)
        if medium is None:
            xf = WaveField(phi.omega, phi.k, grid, np.array([L]), phi.values, "X")
        else:
            bh, m, sigma_H = medium
            xf = solve_regularized(bh, m, phi, L, sigma_H, dz=_solve_dz(cfg), store_every=10**9)
        fields[float(w)] = to_psi(xf)
    return fields


def _pulse_task(text, seed, r):
    cfg = _config(text)
    grid, src = _grid(cfg), _source(cfg)
    quad = BandQuadrature.for_source(src, 2 * cfg.numerics.pulse_half_window)
    rng = stream(seed, "pulse", r)
    m = sample_measure(_measure_spec(cfg), grid, rng)
    C = cfg.constants()
    bh = field_BH(_medium_kernel(cfg), C.H, cfg.numerics.A, np.linspace(0, cfg.physical.L, 11), m.full_q, rng)
    fields = _pulse_fields(cfg, quad, grid, src, (bh, m, C.sigma_H))
    p = synthesize_pulse(fields, time_grid(src, cfg.numerics.pulse_half_window), quad=quad, grid=grid)
    return p.energy(), spectral_energy(fields, quad, grid)


def _map(fn, text, seed, count, workers):
    if workers <= 1 or count <= 1:
        return [fn(text, seed, r) for r in range(count)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, [text] * count, [seed] * count, range(count)))


# ---------------------------------------------------------------- pipelines

class _Writer:
    def __init__(self, directory: Path, seed: int):
        self.dir = directory
        self.seed = seed
        self.lineage = {}

    def array(self, name, arr, tag, replicas="-"):
        for p in artifacts.write_array(self.dir / name, arr):
            self.lineage[p.name] = f"seed={self.seed};tag={tag};replicas={replicas}"

    def csv(self, name, header, rows, tag, replicas="-"):
        artifacts.write_csv(self.dir / name, header, rows)
        self.lineage[name] = f"seed={self.seed};tag={tag};replicas={replicas}"


def _pipe_medium(cfg, w, text, replicas, workers):
    out = _map(_medium_task, text, w.seed, replicas, workers)
    z = _medium_z(cfg)
    paths = np.array([o[0] for o in out])
    w.array("z", z, "medium")
    w.array("x", _grid(cfg).axis, "medium")
    w.array("V", out[0][1], "medium", "0")
    w.array("V_x0", paths, "medium", f"0..{replicas - 1}")
    step = max(1, round(math.pi / (cfg.medium.spectral_cutoff * cfg.numerics.medium_dz)))
    lags = step * np.arange(1, 33)
    lags = lags[lags < z.size // 2]
    mean, se = autocovariance(paths, None, lags)
    C = cfg.constants()
    spec = _measure_spec(cfg)
    R0 = 2 * spec.amplitude_second_moment * spec.n_atoms * spec.weight**2
    model = C.C_frak * R0 * (lags * cfg.numerics.medium_dz) ** (-cfg.medium.hurst_frak)
    w.csv("autocov.csv", ["lag", "distance", "autocov", "stderr", "model"],
          zip(lags, lags * cfg.numerics.medium_dz, mean, se, model), "medium", f"0..{replicas - 1}")
    if replicas >= 100:
        fit = fit_decay_exponent(paths, lags[lags >= 2 * step], cfg.numerics.medium_dz)
        fit_row = (fit.exponent, fit.amplitude)
    else:
        fit_row = (math.nan, math.nan)
    w.csv("summary.csv", ["hurst_frak", "fit_exponent", "fit_amplitude", "model_amplitude", "max_imag_residue"],
          [(cfg.medium.hurst_frak, *fit_row, C.C_frak * R0, max(o[2] for o in out))], "medium", f"0..{replicas - 1}")
    return 0


def _pipe_fbm(cfg, w, text, replicas, workers):
    H = cfg.constants().H
    L = cfg.physical.L
    z = np.linspace(0, L, cfg.numerics.fbm_nz)
    exact = fbm_exact(H, z, stream(w.seed, "fbm-exact"), paths=replicas)
    A = cfg.numerics.A
    dr = default_dr(A, L)
    noise = SpectralNoise.draw(stream(w.seed, "fbm-spectral"), A, dr, replicas)
    spec_B, _ = fbm_spectral(H, z, noise)
    w.array("z", z, "fbm")
    w.array("exact", exact.values, "fbm-exact", f"0..{replicas - 1}")
    w.array("spectral", spec_B.values, "fbm-spectral", f"0..{replicas - 1}")
    hol = [holder_exponent(HolderPath(z, exact.values[:, j])) for j in range(min(replicas, 16))]
    rows = [("exact", H, float(exact.values[-1].var()), L ** (2 * H), float(np.median(hol))),
            ("spectral", H, float(spec_B.values[-1].var()), float(increment_variance(H, A, dr, L)), math.nan)]
    w.csv("summary.csv", ["method", "H", "var_end", "target_var_end", "median_holder"], rows, "fbm",
          f"0..{replicas - 1}")
    return 0


def _pipe_solve(cfg, w, text, replicas, workers):
    out = _map(_solve_task, text, w.seed, replicas, workers)
    rows = []
    for r, (z, norms, _, _) in enumerate(out):
        rows += [(r, zi, ni, ni / norms[0] - 1) for zi, ni in zip(z, norms)]
    w.csv("conservation.csv", ["replica", "z", "norm", "drift"], rows, "solve", f"0..{replicas - 1}")
    w.array("X_final", np.array([o[2] for o in out]), "solve", f"0..{replicas - 1}")
    w.csv("born.csv", ["order", "relative_residual"], out[0][3], "solve", "0")
    drifts = [np.max(np.abs(o[1] / o[1][0] - 1)) / cfg.physical.L for o in out]
    w.csv("summary.csv", ["replicas", "max_drift_per_unit_z"], [(replicas, max(drifts))], "solve",
          f"0..{replicas - 1}")
    return 0


def _pipe_modes(cfg, w, text, replicas, workers):
    out = _map(_modes_task, text, w.seed, replicas, workers)
    detail = [(r, row.eps, row.backscatter, row.forward_error, row.energy_drift) for r, rows in enumerate(out)
              for row in rows]
    w.csv("eps_sweep_replicas.csv", ["replica", "eps", "backscatter", "forward_error", "energy_drift"], detail,
          "modes", f"0..{replicas - 1}")
    summary = []
    for i, eps in enumerate(cfg.regime.eps):
        b = np.array([rows[i].backscatter for rows in out])
        f = np.array([rows[i].forward_error for rows in out])
        summary.append((eps, b.mean(), f.mean(), replicas))
    w.csv("eps_sweep.csv", ["eps", "backscatter", "forward_error", "replicas"], summary, "modes",
          f"0..{replicas - 1}")
    return 0


def _theta_paths(cfg, eps, replicas, seed, fast_step=0.05):
    """Theta(B(u/eps)) on a slow grid over [0, L] for the same wavevector twice (Rhat = 1)."""
    L = cfg.physical.L
    n = int(math.ceil(L / (eps * fast_step))) + 1
    z = np.linspace(0, L, n)
    sampler = _sampler(cfg.medium.hurst_frak, cfg.medium.spectral_cutoff, n, (z[1] - z[0]) / eps)
    theta = cfg.theta()
    out = np.empty((replicas, n, 2))
    rng = stream(seed, f"moments-eps{eps!r}")
    for s in range(0, replicas, 512):
        th = theta(sampler.sample(rng, min(512, replicas - s)))
        out[s : s + th.shape[0], :, 0] = th
        out[s : s + th.shape[0], :, 1] = th
    return z, out


def _pipe_moments(cfg, w, text, replicas, workers):
    counts = [(n, len(enumerate_pairings(n)[0]), double_factorial(n - 1)) for n in range(2, 11, 2)]
    w.csv("pairings.csv", ["n", "pairings", "double_factorial"], counts, "moments")
    h = cfg.medium.hurst_frak
    C = cfg.constants()
    L = cfg.physical.L
    limit = C.C_frak * L ** (2 - h) / ((1 - h) * (2 - h))
    paired = pairing_moment(2, h, 1.0, L).value
    rows = []
    for eps in cfg.regime.eps:
        z, paths = _theta_paths(cfg, eps, replicas, w.seed)
        est = mc_medium_moment(paths, z, eps, h) if replicas >= 100 else None
        exact = second_moment_finite_eps(cfg.theta(), cfg.law(), eps, L)
        rows.append((eps, est.value if est else math.nan, est.stderr if est else math.nan, exact, limit,
                     C.C_frak * paired))
    w.csv("second_moment.csv", ["eps", "mc", "stderr", "finite_eps", "limit", "pairing"], rows, "moments",
          f"0..{replicas - 1}")
    grid, src = _grid(cfg), _source(cfg)
    m = sample_measure(_measure_spec(cfg), grid, stream(w.seed, "moments-measure"))
    phi = initial_condition(src, src.omega0, grid)
    bh = field_BH(_medium_kernel(cfg), C.H, cfg.numerics.A, np.array([0.0, L]), m.full_q,
                  stream(w.seed, "moments-wick"))
    wick = wick_moment_XA(MomentSpec((2,), (), nodes=cfg.numerics.wick_nodes), bh, m, phi, phi.values[0], L,
                          C.sigma_H)
    w.csv("wick.csv", ["order", "real", "imag"], [(2, wick.real, wick.imag)], "moments-wick")
    return 0


def _pipe_pulse(cfg, w, text, replicas, workers):
    grid, src = _grid(cfg), _source(cfg)
    hw = cfg.numerics.pulse_half_window
    quad = BandQuadrature.for_source(src, 2 * hw)
    t = time_grid(src, hw)
    kap = grid.kappa_points()
    f0 = {float(wn): src.spectrum(wn, kap) for wn in quad.nodes}
    pf = synthesize_pulse(f0, t, quad=quad, grid=grid)
    homog = _pulse_fields(cfg, quad, grid, src)
    p = synthesize_pulse(homog, t, grid.axis, quad=quad, grid=grid, omega_c=src.omega_c)
    w.array("t", t, "pulse")
    w.array("x", grid.axis, "pulse")
    w.array("p_homogeneous", p.values, "pulse")
    w.array("omega_nodes", np.stack([quad.nodes, quad.weights], axis=1), "pulse")
    rows = [("source", -1, pf.energy(), spectral_energy(f0, quad, grid), 2.0),
            ("homogeneous", -1, p.energy(), spectral_energy(homog, quad, grid), p.energy() / pf.energy())]
    out = _map(_pulse_task, text, w.seed, replicas, workers)
    rows += [("random", r, e, es, e / pf.energy()) for r, (e, es) in enumerate(out)]
    w.csv("energy.csv", ["case", "replica", "energy_t_x", "energy_omega_kappa", "ratio_to_source"], rows, "pulse",
          f"0..{replicas - 1}")
    return 0


def verify_checks(cfg, seed=0) -> list:
    """(name, value, tolerance, passed) for the invariant suite."""
    checks = []
    u, wts = gauss_hermite(40)
    gram = np.array([[np.sum(wts * hermite_eval(a, u) * hermite_eval(b, u)) / math.sqrt(math.factorial(a) * math.factorial(b))
                      for b in range(11)] for a in range(11)])
    checks.append(("hermite_orthogonality", float(np.max(np.abs(gram - np.eye(11)))), 1e-10))
    bad = max(abs(len(enumerate_pairings(n)[0]) - double_factorial(n - 1)) for n in range(2, 11, 2))
    checks.append(("pairing_counts", float(bad), 0.0))
    kern = _medium_kernel(cfg)
    checks.append(("kernel_trace", abs(kern.trace() - kern.spec.volume) / kern.spec.volume, 1e-8))
    text = cfg.to_text()
    a = _medium_task(text, seed, 0)
    checks.append(("medium_mirror_symmetry", a[2], 1e-10))
    alpha, L = 0.3, 1.0
    lin = HolderPath(np.linspace(0, L, 33), np.linspace(0, L, 33))
    closed = L**alpha / (math.gamma(1 + alpha) * math.gamma(1 - alpha) * math.gamma(alpha))
    checks.append(("lambda_alpha_linear", abs(lambda_alpha(lin, alpha) / closed - 1), 1e-8))
    b = _medium_task(text, seed, 0)
    same = np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    checks.append(("seeded_determinism", 0.0 if same else 1.0, 0.0))
    return [(n, v, tol, bool(v <= tol)) for n, v, tol in checks]


def _pipe_verify(cfg, w, text, replicas, workers):
    checks = verify_checks(cfg, w.seed)
    w.csv("verify.csv", ["check", "value", "tolerance", "passed"], checks, "verify")
    return 0 if all(c[3] for c in checks) else 1


PIPELINES = {"medium": _pipe_medium, "fbm": _pipe_fbm, "solve": _pipe_solve, "modes": _pipe_modes,
             "moments": _pipe_moments, "pulse": _pipe_pulse, "verify": _pipe_verify}
DEFAULT_VIEWS = {"medium": ("medium-realization", "autocov-decay"), "fbm": ("fbm-paths",),
                 "solve": ("conservation",), "modes": ("eps-sweep",), "pulse": ("pulse",)}


def _replica_count(cfg, subcommand):
    if subcommand == "modes":
        return cfg.regime.replicas
    if subcommand == "pulse":
        return cfg.numerics.pulse_replicas
    return cfg.numerics.replicas


def output_root(cfg, out=None) -> Path:
    return Path(out or os.environ.get(OUT_ENV) or cfg.run.out)


def run(cfg: ExperimentConfig, subcommand: str, out=None, seed=None, replicas=None, overwrite=False,
        workers=None) -> tuple[Path, int]:
    """Execute one pipeline; returns (artifact directory, exit status)."""
    if subcommand not in PIPELINES:
        raise ValueError(f"unknown subcommand {subcommand!r}; expected one of {SUBCOMMANDS}")
    if seed is not None:
        cfg = cfg.replace(run={"seed": seed})
    if replicas is not None:
        key = {"modes": ("regime", "replicas"), "pulse": ("numerics", "pulse_replicas")}.get(
            subcommand, ("numerics", "replicas"))
        cfg = cfg.replace(**{key[0]: {key[1]: replicas}})
    directory = output_root(cfg, out) / subcommand
    if directory.exists() and any(directory.iterdir()):
        if not overwrite:
            raise FileExistsError(f"{directory} is not empty; pass overwrite to replace it")
        if not (directory / artifacts.MANIFEST).exists():
            raise FileExistsError(f"{directory} has no manifest; refusing to clear a foreign directory")
        shutil.rmtree(directory)
    directory.mkdir(parents=True, exist_ok=True)
    text = cfg.to_text()
    w = _Writer(directory, cfg.run.seed)
    (directory / "config.txt").write_text(text, encoding="utf-8")
    w.csv("derived.csv", ["quantity", "value"], sorted(cfg.derived().items()), "config")
    status = PIPELINES[subcommand](cfg, w, text, _replica_count(cfg, subcommand), workers or cfg.numerics.workers)
    for view in DEFAULT_VIEWS.get(subcommand, ()):
        emit_plotdata(directory.parent, view, manifest=False, lineage=w.lineage)
    artifacts.write_manifest(directory, w.lineage)
    return directory, status


# ---------------------------------------------------------------- plot data

def _need(path: Path) -> Path:
    if not path.exists():
        raise ArtifactError(f"missing artifact {path}")
    return path


def emit_plotdata(root, view: str, manifest: bool = True, lineage=None) -> Path:
    """Flatten one view into <root>/<subcommand>/plot_<view>.csv.

    medium-realization: z, x, V          autocov-decay: distance, autocov, stderr, model
    fbm-paths: path, z, exact, spectral  conservation: z, norm, drift (replica 0)
    eps-sweep: eps, backscatter, forward_error
    pulse: t, x, p (homogeneous medium)
    """
    if view not in VIEWS:
        raise ValueError(f"unknown view {view!r}; expected one of {tuple(VIEWS)}")
    d = Path(root) / VIEWS[view]
    out = d / f"plot_{view}.csv"
    if view == "medium-realization":
        z, x, V = (artifacts.read_array(_need(d / f"{n}.bin")) for n in ("z", "x", "V"))
        rows = ((zi, xj, V[i, j]) for i, zi in enumerate(z) for j, xj in enumerate(x))
        header = ["z", "x", "V"]
    elif view == "autocov-decay":
        hdr, data = artifacts.read_csv(_need(d / "autocov.csv"))
        rows = [(r[1], r[2], r[3], r[4]) for r in data]
        header = ["distance", "autocov", "stderr", "model"]
    elif view == "fbm-paths":
        z, ex, sp = (artifacts.read_array(_need(d / f"{n}.bin")) for n in ("z", "exact", "spectral"))
        k = min(4, ex.shape[1])
        rows = ((j, zi, ex[i, j], sp[i, j]) for j in range(k) for i, zi in enumerate(z))
        header = ["path", "z", "exact", "spectral"]
    elif view == "conservation":
        hdr, data = artifacts.read_csv(_need(d / "conservation.csv"))
        rows = [(r[1], r[2], r[3]) for r in data if r[0] == "0"]
        header = ["z", "norm", "drift"]
    elif view == "eps-sweep":
        hdr, data = artifacts.read_csv(_need(d / "eps_sweep.csv"))
        rows = [(r[0], r[1], r[2]) for r in data]
        header = ["eps", "backscatter", "forward_error"]
    else:
        t, x, p = (artifacts.read_array(_need(d / f"{n}.bin")) for n in ("t", "x", "p_homogeneous"))
        rows = ((ti, xj, p[i, j]) for i, ti in enumerate(t) for j, xj in enumerate(x))
        header = ["t", "x", "p"]
    artifacts.write_csv(out, header, rows)
    if lineage is not None:
        lineage[out.name] = f"derived-from={VIEWS[view]}"
    if manifest and (d / artifacts.MANIFEST).exists():
        old = {rel: lin for rel, (_, lin) in artifacts.read_manifest(d).items()}
        old[out.name] = f"derived-from={VIEWS[view]}"
        artifacts.write_manifest(d, old)
    return out
