"""Experiment configuration: sectioned key = value text <-> dataclasses.

Floats are written with repr so text -> object -> text is lossless.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import math
from dataclasses import dataclass, field, fields
from typing import get_type_hints

import numpy as np


class ConfigError(ValueError):
    def __init__(self, name: str, message: str):
        super().__init__(f"{name}: {message}")
        self.field = name


@dataclass
class Physical:
    L: float = 1.0
    L_S: float = -1.0
    c0: float = 1.0
    omega0: float = 10.0
    bandwidth: float = 5.0
    source_width: float = 1.0


@dataclass
class Medium:
    hurst_frak: float = 0.5
    spectral_cutoff: float = 1.0
    theta: str = "sine"
    theta_param: float = 1.0
    kernel: str = "gaussian"
    kernel_length: float = 1.0
    kernel_nodes: int = 32
    n_atoms: int = 3
    atom_weight: float = 0.3
    amplitude: str = "disk"
    measure_radius: float = 1.0
    cap: float = 2.0


@dataclass
class Numerics:
    grid_n: int = 65
    grid_length: float = 2 * math.pi * 8
    A: float = 4.0
    n_max: int = 5
    dz: float = 0.0  # 0 -> solver default
    replicas: int = 128
    medium_nz: int = 1024
    medium_dz: float = math.pi / 4
    fbm_nz: int = 257
    wick_nodes: int = 16
    pulse_half_window: float = 20.0
    pulse_replicas: int = 2
    workers: int = 1


@dataclass
class Regime:
    eps: tuple = (0.2, 0.1, 0.05)
    alpha_rule: str = "zero"
    omega: float = 0.5
    omega0: float = 0.5
    bandwidth: float = 0.25
    source_width: float = 3.0
    L_S: float = -0.5
    grid_n: int = 33
    grid_length: float = 2 * math.pi * 4
    atom_weight: float = 0.5
    measure_radius: float = 0.5
    cap: float = 3.0
    replicas: int = 2


@dataclass
class Run:
    seed: int = 0
    out: str = "runs/default"


SECTIONS = {"physical": Physical, "medium": Medium, "numerics": Numerics, "regime": Regime, "run": Run}

THETA_FAMILIES = ("sine", "cubic", "identity")
KERNELS = ("constant", "gaussian", "cosine")
ALPHA_RULES = ("zero",)


@dataclass
class ExperimentConfig:
    physical: Physical = field(default_factory=Physical)
    medium: Medium = field(default_factory=Medium)
    numerics: Numerics = field(default_factory=Numerics)
    regime: Regime = field(default_factory=Regime)
    run: Run = field(default_factory=Run)

    def __post_init__(self):
        self.validate()

    def validate(self):
        p, m, n, r = self.physical, self.medium, self.numerics, self.regime
        _check("physical.L", p.L > 0, "must be positive")
        _check("physical.L_S", p.L_S <= 0, "source plane must lie at or before z = 0")
        _check("physical.c0", p.c0 > 0, "must be positive")
        _check("physical.bandwidth", 0 < p.bandwidth < p.omega0, "band must avoid omega = 0")
        _check("physical.source_width", p.source_width > 0, "must be positive")
        _check("medium.hurst_frak", 0 < m.hurst_frak < 1, "must lie in (0, 1)")
        _check("medium.spectral_cutoff", m.spectral_cutoff > 0, "must be positive")
        _check("medium.theta", m.theta in THETA_FAMILIES, f"one of {THETA_FAMILIES}")
        _check("medium.kernel", m.kernel in KERNELS, f"one of {KERNELS}")
        _check("medium.kernel_nodes", m.kernel_nodes >= 4, "needs at least 4 nodes")
        _check("medium.n_atoms", m.n_atoms >= 1, "needs at least one atom")
        _check("medium.atom_weight", m.atom_weight > 0, "must be positive")
        _check("medium.amplitude", m.amplitude in ("disk", "interval"), "disk or interval")
        _check("medium.cap", m.cap >= 2 * m.n_atoms * m.atom_weight, "below the total-variation bound 2 * n_atoms * atom_weight")
        _check("numerics.grid_n", n.grid_n >= 3, "needs at least 3 points")
        _check("numerics.grid_length", n.grid_length > 0, "must be positive")
        _check("numerics.A", n.A > 0, "must be positive")
        _check("numerics.n_max", n.n_max >= 0, "must be nonnegative")
        _check("numerics.dz", n.dz >= 0, "must be nonnegative")
        for name in ("replicas", "medium_nz", "fbm_nz", "wick_nodes", "pulse_replicas", "workers"):
            _check(f"numerics.{name}", getattr(n, name) >= 1, "must be at least 1")
        _check("numerics.medium_dz", n.medium_dz > 0, "must be positive")
        _check("numerics.pulse_half_window", n.pulse_half_window > 0, "must be positive")
        _check("regime.eps", len(r.eps) > 0 and all(0 < e < 1 for e in r.eps), "values must lie in (0, 1)")
        _check("regime.alpha_rule", r.alpha_rule in ALPHA_RULES, f"one of {ALPHA_RULES}")
        _check("regime.omega", abs(r.omega - r.omega0) <= r.bandwidth, "outside the mode source band")
        _check("regime.bandwidth", 0 < r.bandwidth < r.omega0, "band must avoid omega = 0")
        _check("regime.cap", r.cap >= 2 * m.n_atoms * r.atom_weight, "below the total-variation bound")
        _check("regime.replicas", r.replicas >= 1, "must be at least 1")

    # -- text round trip

    def to_text(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for name in SECTIONS:
            sec = getattr(self, name)
            cp[name] = {f.name: _format(getattr(sec, f.name)) for f in fields(sec)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp.read_string(text)
        unknown = set(cp.sections()) - set(SECTIONS)
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown section")
        parts = {}
        for name, kind in SECTIONS.items():
            hints = get_type_hints(kind)
            known = {f.name for f in fields(kind)}
            values = {}
            if cp.has_section(name):
                for key, raw in cp[name].items():
                    if key not in known:
                        raise ConfigError(f"{name}.{key}", "unknown field")
                    values[key] = _parse(f"{name}.{key}", raw, hints[key])
            parts[name] = kind(**values)
        return cls(**parts)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    def replace(self, **sections) -> "ExperimentConfig":
        """Copy with per-section overrides, e.g. replace(run={'seed': 3})."""
        parts = {name: dataclasses.replace(getattr(self, name), **sections.get(name, {})) for name in SECTIONS}
        return ExperimentConfig(**parts)

    # -- derived objects

    def theta(self):
        from .special_fn import ThetaSpec

        if self.medium.theta == "sine":
            return ThetaSpec.sine(self.medium.theta_param)
        return getattr(ThetaSpec, self.medium.theta)()

    def law(self):
        from .special_fn import LongRangeLaw

        return LongRangeLaw(self.medium.hurst_frak, self.medium.spectral_cutoff)

    def constants(self):
        from .special_fn import constants

        return constants(self.theta(), self.law())

    def derived(self) -> dict:
        c = self.constants()
        return {"H": c.H, "s": c.s, "sigma_H": c.sigma_H, "C_frak": c.C_frak, "c_frak": self.law().c_frak,
                "C_H": c.C_H, "theta1": self.theta().theta1}


def _check(name: str, ok: bool, message: str):
    if not ok:
        raise ConfigError(name, message)


def _format(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(name: str, raw: str, kind):
    raw = raw.strip()
    try:
        if kind is tuple:
            return tuple(float(x) for x in raw.split(",") if x.strip())
        if kind is int:
            return int(raw)
        if kind is float:
            v = float(raw)
            if not np.isfinite(v):
                raise ValueError("not finite")
            return v
        return raw
    except ValueError as exc:
        raise ConfigError(name, f"cannot parse {raw!r} ({exc})") from None
