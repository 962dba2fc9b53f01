"""Experiment configuration files.

A config is a flat list of ``section.key = value`` lines.  INI section
headers are accepted as a shorthand, so

    [grid]
    n = 64

is the same as ``grid.n = 64``.  ``#`` and ``;`` start comments.  Every
recognised key is listed in :data:`KEYS`; unknown keys are validation errors.
The full grammar is documented in the README.
"""
from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from ..core import ConeSpec, CouplingParams, Grid, GridError, State, bump, gaussian, gaussian_radius, make_state
from ..scattering import critical_exponent

OUT_ENV = "GRADWAVE_OUT"
PROFILES = ("gaussian", "bump", "zero", "random")
NORMS = ("L2", "Hsc", "sup")

# key -> (type, default); default None means "not set"
KEYS: dict[str, tuple[type, object]] = {
    "grid.d": (int, 3),
    "grid.n": (int, 64),
    "grid.L": (float, 16.0),
    "params.lambda": (float, 1.0),
    "params.mu": (float, 1.0),
    "params.alpha": (float, 0.0),
    "params.beta": (float, 2.0),
    "params.sigma": (int, -1),
    "data.profile": (str, "gaussian"),
    "data.amplitude": (float, 1.0),
    "data.v_amplitude": (float, None),
    "data.ut_amplitude": (float, 0.0),
    "data.vt_amplitude": (float, 0.0),
    "data.width": (float, 1.0),
    "data.separation": (float, 0.0),
    "data.energy_norm": (float, None),
    "run.T": (float, 1.0),
    "run.dt": (float, None),
    "run.stride": (int, 1),
    "run.dealias": (bool, True),
    "run.blowup_threshold": (float, 1e6),
    "run.override_horizon": (bool, False),
    "run.override_dt": (bool, False),
    "diagnostics.norms": (list, ["L2", "Hsc", "sup"]),
    "diagnostics.hs_index": (float, None),
    "diagnostics.cone_x0": (list, None),
    "diagnostics.cone_t0": (float, None),
    "diagnostics.cone_S": (float, None),
    "diagnostics.cone_T": (float, None),
    "diagnostics.scatter_horizon": (float, None),
    "diagnostics.scatter_direction": (str, "future"),
    "seed": (int, 0),
    "output.dir": (str, "out"),
    "output.prefix": (str, "run"),
}


class ConfigError(ValueError):
    """Raised with every violated invariant of a config, one per line."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.problems))


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(kind: type, text: str):
    if kind is bool:
        return _parse_bool(text)
    if kind is list:
        return [x.strip() for x in text.split(",") if x.strip()]
    if kind is int:
        val = float(text)
        if not val.is_integer():
            raise ValueError(f"not an integer: {text!r}")
        return int(val)
    return kind(text.strip())


def read_pairs(text: str) -> dict[str, str]:
    """Raw ``dotted.key -> value`` pairs of a config text."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive (grid.L)
    cp.read_string("[__top__]\n" + text)
    out = {}
    for sec in cp.sections():
        for key, val in cp.items(sec):
            out[key if sec == "__top__" else f"{sec}.{key}"] = val
    return out


@dataclass
class ExperimentConfig:
    d: int = 3
    n: int = 64
    L: float = 16.0
    lam: float = 1.0
    mu: float = 1.0
    alpha: float = 0.0
    beta: float = 2.0
    sigma: int = -1
    profile: str = "gaussian"
    amplitude: float = 1.0
    v_amplitude: Optional[float] = None
    ut_amplitude: float = 0.0
    vt_amplitude: float = 0.0
    width: float = 1.0
    separation: float = 0.0
    energy_norm: Optional[float] = None
    T: float = 1.0
    dt: Optional[float] = None
    stride: int = 1
    dealias: bool = True
    blowup_threshold: float = 1e6
    override_horizon: bool = False
    override_dt: bool = False
    norms: list = field(default_factory=lambda: ["L2", "Hsc", "sup"])
    hs_index: Optional[float] = None
    cone_x0: Optional[list] = None
    cone_t0: Optional[float] = None
    cone_S: Optional[float] = None
    cone_T: Optional[float] = None
    scatter_horizon: Optional[float] = None
    scatter_direction: str = "future"
    seed: int = 0
    out_dir: str = "out"
    prefix: str = "run"
    source: Optional[str] = None

    # -- derived objects -----------------------------------------------------

    @property
    def grid(self) -> Grid:
        return Grid(self.d, self.n, self.L)

    @property
    def params(self) -> CouplingParams:
        return CouplingParams(self.lam, self.mu, self.alpha, self.beta, self.sigma)

    @property
    def step(self) -> float:
        return self.dt if self.dt is not None else 0.5 * self.L / self.n

    @property
    def sobolev_index(self) -> float:
        if self.hs_index is not None:
            return self.hs_index
        return critical_exponent(self.d, self.alpha, self.beta)

    @property
    def cone(self) -> Optional[ConeSpec]:
        if self.cone_t0 is None:
            return None
        x0 = [float(c) for c in self.cone_x0] if self.cone_x0 else [0.0] * self.d
        S = 0.0 if self.cone_S is None else self.cone_S
        T = self.cone_t0 if self.cone_T is None else self.cone_T
        return ConeSpec(tuple(x0), self.cone_t0, S, T)

    @property
    def v_amp(self) -> float:
        return self.amplitude if self.v_amplitude is None else self.v_amplitude

    def data_radius(self) -> float:
        """Radius (about the origin) outside which the data vanish to 1e-12 relative."""
        if self.profile == "zero":
            return 0.0
        if self.profile == "gaussian":
            r = gaussian_radius(self.width)
        else:
            r = self.width
        return r + abs(self.separation)

    def initial_state(self) -> State:
        """Sample the configured profiles (before any de-aliasing projection)."""
        grid = self.grid
        shift = [self.separation] + [0.0] * (self.d - 1)
        if self.profile == "zero":
            return State.zeros(grid)
        if self.profile == "random":
            s = _random_state(grid, self, shift)
        else:
            make = gaussian if self.profile == "gaussian" else bump
            amps = (self.amplitude, self.ut_amplitude, self.v_amp, self.vt_amplitude)
            centers = (None, None, shift, shift)
            profs = [make(a, self.width, c) if a != 0 else None for a, c in zip(amps, centers)]
            s = make_state(grid, u=profs[0], ut=profs[1], v=profs[2], vt=profs[3])
        if self.energy_norm is not None:
            from ..scattering import _energy_norm0

            norm = _energy_norm0(s)
            if norm > 0:
                k = self.energy_norm / norm
                s = State(grid, *(f * k for f in s.fields()), t=s.t)
        return s

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    # -- validation ----------------------------------------------------------

    def problems(self) -> list[str]:
        """Every violated invariant, as readable messages (empty when valid)."""
        out = []
        try:
            grid = self.grid
        except GridError as exc:
            out.append(str(exc))
            grid = None
        try:
            self.params
        except ValueError as exc:
            out.append(str(exc))
        if self.profile not in PROFILES:
            out.append(f"data.profile must be one of {PROFILES}, got {self.profile!r}")
        if self.profile != "zero" and not self.width > 0:
            out.append(f"data.width must be positive, got {self.width}")
        if self.energy_norm is not None and self.energy_norm < 0:
            out.append("data.energy_norm must be >= 0")
        if not self.T >= 0:
            out.append(f"run.T must be >= 0, got {self.T}")
        if self.stride < 1:
            out.append(f"run.stride must be >= 1, got {self.stride}")
        if self.blowup_threshold <= 0:
            out.append("run.blowup_threshold must be positive")
        bad = [x for x in self.norms if x not in NORMS]
        if bad:
            out.append(f"diagnostics.norms: unknown entries {bad}; allowed {NORMS}")
        if self.scatter_direction not in ("future", "past"):
            out.append(f"diagnostics.scatter_direction must be future or past, got {self.scatter_direction!r}")
        if grid is not None:
            dt = self.step
            if not dt > 0:
                out.append(f"run.dt must be positive, got {dt}")
            else:
                if dt > 0.5 * grid.h and not self.override_dt:
                    out.append(f"run.dt={dt:g} exceeds 0.5*h={0.5 * grid.h:g} (set run.override_dt)")
                if self.T > 0 and abs(round(self.T / dt) * dt - self.T) > 1e-12 * max(1.0, self.T):
                    out.append(f"run.T={self.T:g} is not a multiple of run.dt={dt:g}")
            radius = self.data_radius() if self.width > 0 else 0.0
            horizon = grid.horizon(radius)
            t_max = max(self.T, self.scatter_horizon or 0.0)
            if t_max > horizon and not self.override_horizon:
                out.append(
                    f"horizon: data radius {radius:.4g} + T {t_max:g} exceeds L/2 - 2h = "
                    f"{grid.L / 2 - 2 * grid.h:.4g} (set run.override_horizon or pass --override-horizon)"
                )
            cone_keys = (self.cone_x0, self.cone_S, self.cone_T)
            if self.cone_t0 is None and any(k is not None for k in cone_keys):
                out.append("diagnostics.cone_* given without diagnostics.cone_t0")
            if self.cone_t0 is not None:
                try:
                    cone = self.cone
                    cone.check_fits(grid)
                    if cone.T > self.T + 1e-12 and cone.S < self.T:
                        out.append(f"cone window [S, T] = [{cone.S:g}, {cone.T:g}] extends past run.T={self.T:g}")
                    for name, val in (("cone_S", cone.S), ("cone_T", cone.T), ("cone_t0", cone.t0)):
                        if name == "cone_t0" and val > self.T:
                            continue
                        if dt > 0 and abs(round(val / dt) * dt - val) > 1e-9 * max(1.0, abs(val)):
                            out.append(f"diagnostics.{name}={val:g} is not a multiple of run.dt={dt:g}")
                    if dt > 0 and self.stride * dt > grid.h + 1e-15:
                        out.append(f"cone diagnostics need stride*dt <= h = {grid.h:g}, got {self.stride * dt:g}")
                except ValueError as exc:
                    out.append(f"cone: {exc}")
            if self.scatter_horizon is not None:
                if not self.scatter_horizon > 0:
                    out.append("diagnostics.scatter_horizon must be positive")
                elif dt > 0 and abs(round(self.scatter_horizon / dt) * dt - self.scatter_horizon) > 1e-9:
                    out.append(f"diagnostics.scatter_horizon={self.scatter_horizon:g} is not a multiple of run.dt")
        return out

    def validate(self) -> "ExperimentConfig":
        probs = self.problems()
        if probs:
            raise ConfigError(probs)
        return self

    def output_dir(self, override: Optional[str] = None) -> Path:
        """``--out`` beats the ``GRADWAVE_OUT`` environment variable, which beats ``output.dir``."""
        if override:
            return Path(override)
        if os.environ.get(OUT_ENV):
            return Path(os.environ[OUT_ENV])
        return Path(self.out_dir)


_ATTR = {
    "grid.d": "d", "grid.n": "n", "grid.L": "L",
    "params.lambda": "lam", "params.mu": "mu", "params.alpha": "alpha", "params.beta": "beta",
    "params.sigma": "sigma",
    "data.profile": "profile", "data.amplitude": "amplitude", "data.v_amplitude": "v_amplitude",
    "data.ut_amplitude": "ut_amplitude", "data.vt_amplitude": "vt_amplitude", "data.width": "width",
    "data.separation": "separation", "data.energy_norm": "energy_norm",
    "run.T": "T", "run.dt": "dt", "run.stride": "stride", "run.dealias": "dealias",
    "run.blowup_threshold": "blowup_threshold", "run.override_horizon": "override_horizon",
    "run.override_dt": "override_dt",
    "diagnostics.norms": "norms", "diagnostics.hs_index": "hs_index", "diagnostics.cone_x0": "cone_x0",
    "diagnostics.cone_t0": "cone_t0", "diagnostics.cone_S": "cone_S", "diagnostics.cone_T": "cone_T",
    "diagnostics.scatter_horizon": "scatter_horizon", "diagnostics.scatter_direction": "scatter_direction",
    "seed": "seed", "output.dir": "out_dir", "output.prefix": "prefix",
}
assert set(_ATTR) == set(KEYS)


def config_from_pairs(pairs: dict[str, str], extra_sections: tuple[str, ...] = (),
                      source: Optional[str] = None) -> ExperimentConfig:
    """Build a config from raw pairs; conversion and key errors are collected, not raised one by one."""
    problems, kwargs = [], {}
    for key, text in pairs.items():
        if key.split(".")[0] in extra_sections:
            continue
        if key not in KEYS:
            problems.append(f"unknown key {key!r}")
            continue
        kind = KEYS[key][0]
        try:
            kwargs[_ATTR[key]] = _convert(kind, text)
        except ValueError as exc:
            problems.append(f"{key}: {exc}")
    cfg = ExperimentConfig(source=source, **kwargs)
    problems += cfg.problems()
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path, **overrides) -> ExperimentConfig:
    """Parse and validate a config file; ``overrides`` replace parsed values before validation."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from exc
    try:
        pairs = read_pairs(text)
    except configparser.Error as exc:
        raise ConfigError([f"{path}: {exc}"]) from exc
    for attr, val in overrides.items():
        key = next(k for k, a in _ATTR.items() if a == attr)
        pairs[key] = str(val)
    return config_from_pairs(pairs, source=str(path))


def _random_state(grid: Grid, cfg: ExperimentConfig, shift) -> State:
    """Bump envelopes modulated by a few seeded low Fourier modes."""
    rng = np.random.default_rng(cfg.seed)
    coords = grid.coords()
    fields_ = []
    for amp, center in ((cfg.amplitude, None), (cfg.ut_amplitude, None), (cfg.v_amp, shift), (cfg.vt_amplitude, shift)):
        env = make_state(grid, u=bump(1.0, cfg.width, center)).u
        mod = np.full(grid.shape, 1.0)
        for _ in range(3):
            k = rng.integers(-2, 3, size=grid.d)
            phase = sum(2 * math.pi * ki * x / cfg.width for ki, x in zip(k, coords))
            mod = mod + 0.3 * rng.normal() * np.cos(phase + rng.uniform(0, 2 * math.pi))
        fields_.append(amp * env * mod)
    return State(grid, *fields_)
