"""Experiment execution: single runs, resumed runs and exponent sweeps."""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .. import diagnostics as dg
from ..core import State
from ..scattering import ScatteringState, energy_norm_distance, scattering_state_from_data
from ..solver import dealias_project, integrate
from . import io
from .config import ConfigError, ExperimentConfig, config_from_pairs, read_pairs

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ("kind", "alpha", "beta", "amplitude", "verdict", "detection_time",
                 "max_sup", "drift_rel", "t_final", "error")


def initial_data(cfg: ExperimentConfig) -> State:
    """Configured data, projected onto the de-aliased modes when de-aliasing is on."""
    s0 = cfg.initial_state()
    return dealias_project(s0) if cfg.dealias else s0


@dataclass
class RunOutcome:
    summary: dict
    final: State
    max_sup: float
    paths: dict = field(default_factory=dict)
    scattering: Optional[ScatteringState] = None


class _RowObserver:
    """Turns every step into accumulator updates and, on the stride lattice, a CSV row."""

    def __init__(self, cfg: ExperimentConfig, E0: float, writer: Optional[io.CsvWriter],
                 scatter: Optional[ScatteringState], t_start: float):
        self.cfg, self.p, self.E0, self.writer = cfg, cfg.params, E0, writer
        self.dt = cfg.step
        self.cone = cfg.cone
        self.scatter = scatter
        self.s_norm = cfg.sobolev_index if "Hsc" in cfg.norms else None
        self.max_sup = 0.0
        self.drift_max = 0.0
        self.last = None
        self.last_row_t = None
        # cumulative cone integrals need the whole window; a resume inside it cannot rebuild them
        c = self.cone
        self.track_cone = c is not None and t_start <= c.S + 1e-12
        self.flux = dg.FluxAccumulator(c, self.p) if self.track_cone else None
        self.mor = dg.MorawetzAccumulator(c, self.p, c.S, min(c.t0, cfg.T)) if self.track_cone else None
        self._flux_sum = self._mor_sum = 0.0

    def _cumulative(self, acc, attr: str) -> Optional[float]:
        n = len(acc.values)
        if n == 0:
            return None
        if n >= 2:
            dt = acc.times[-1] - acc.times[-2]
            setattr(self, attr, getattr(self, attr) + 0.5 * dt * (acc.values[-1] + acc.values[-2]))
        return getattr(self, attr)

    def __call__(self, s: State) -> None:
        self.last = s
        self.max_sup = max(self.max_sup, float(np.max(np.abs(s.u))), float(np.max(np.abs(s.v))))
        flux_res = mor = None
        if self.track_cone:
            n_flux, n_mor = len(self.flux.values), len(self.mor.values)
            self.flux(s)
            self.mor(s)
            if len(self.flux.values) > n_flux:
                cum = self._cumulative(self.flux, "_flux_sum")
                flux_res = dg.cone_energy(s, self.cone, self.p) + cum - self.flux.E_S
            if len(self.mor.values) > n_mor:
                mor = self._cumulative(self.mor, "_mor_sum")
        k = round(s.t / self.dt)
        if k % self.cfg.stride == 0 or abs(s.t - self.cfg.T) <= 1e-12 * max(1.0, self.cfg.T):
            self.row(s, flux_res, mor)

    def row(self, s: State, flux_res=None, mor=None) -> None:
        if self.last_row_t is not None and s.t == self.last_row_t:
            return
        rec = dg.make_record(s, self.p, self.E0, self.s_norm, self.cone)
        self.drift_max = max(self.drift_max, abs(rec.E_w_drift_rel))
        vals = rec.csv_values()
        if "L2" not in self.cfg.norms:
            vals["L2_u"] = vals["L2_v"] = None
        if "sup" not in self.cfg.norms:
            vals["sup_u"] = vals["sup_v"] = None
        vals["flux_residual"] = flux_res
        vals["morawetz_interaction"] = mor
        if self.scatter is not None and self.scatter.direction == "future":
            vals["scatter_dist"] = energy_norm_distance(s, self.scatter)
        if self.writer is not None:
            self.writer.write(vals)
        self.last_row_t = s.t


def _scattering(cfg: ExperimentConfig, s0: State):
    """Scattering state, error message, and the distance at the horizon."""
    if cfg.scatter_horizon is None:
        return None, None, None
    try:
        sc, traj = scattering_state_from_data(
            s0, cfg.scatter_horizon, cfg.step, cfg.params, cfg.scatter_direction, cfg.dealias,
            blowup_threshold=cfg.blowup_threshold, override_dt=cfg.override_dt,
        )
    except dg.CoverageError as exc:
        return None, str(exc), None
    # measured on the run that built the state (the reversed one for "past")
    ref = sc if sc.direction == "future" else ScatteringState(
        sc.grid, sc.u1, -sc.u2, sc.v1, -sc.v2, "future", sc.horizon)
    return sc, None, energy_norm_distance(traj.final, ref)


def execute(cfg: ExperimentConfig, start: Optional[State] = None, csv_path=None,
            resumed_from: Optional[str] = None) -> RunOutcome:
    """Run ``cfg`` (from ``start`` if given, else from its initial data) and build the summary."""
    p = cfg.params
    s0 = initial_data(cfg)
    E0 = dg.energy_weighted(s0, p)
    start = s0 if start is None else start
    sc, sc_error, sc_dist = _scattering(cfg, s0)
    writer = io.CsvWriter(csv_path) if csv_path is not None else None
    obs = _RowObserver(cfg, E0, writer, sc, start.t)
    try:
        traj = integrate(
            start, cfg.T - start.t, cfg.step, p, observers=[obs], stride=1, store=False,
            blowup_threshold=cfg.blowup_threshold, override_dt=cfg.override_dt,
            override_horizon=True,  # checked against the config's data radius at validation
            dealias=cfg.dealias,
        )
        if traj.blowup is not None:
            obs.row(traj.final)
    finally:
        if writer is not None:
            writer.close()
    final = traj.final
    E_final = dg.energy_weighted(final, p)
    drift = 0.0 if E0 == 0 and E_final == 0 else (E_final - E0) / abs(E0) if E0 else math.inf
    summary = {
        "verdict": "blowup" if traj.blowup is not None else "global",
        "t_final": final.t,
        "steps": traj.steps,
        "E0": E0,
        "E_final": E_final,
        "drift_rel_final": drift,
        "drift_rel_max": max(obs.drift_max, abs(drift)),
        "blowup": traj.blowup.as_dict() if traj.blowup is not None else None,
        "scatter": _scatter_summary(cfg, sc, sc_error, sc_dist, final),
        "cone": _cone_summary(cfg, obs),
        "config": _config_dict(cfg),
        "resumed_from": resumed_from,
        "csv": str(csv_path) if csv_path is not None else None,
        "snapshot": None,
        "csv_columns": list(dg.CSV_COLUMNS),
    }
    return RunOutcome(summary, final, obs.max_sup, scattering=sc)


def _scatter_summary(cfg, sc, error, dist_horizon, final) -> Optional[dict]:
    if cfg.scatter_horizon is None:
        return None
    out = {"direction": cfg.scatter_direction, "horizon": cfg.scatter_horizon, "error": error,
           "distance_final": None, "distance_at_horizon": dist_horizon}
    if sc is not None and cfg.scatter_direction == "future":
        out["distance_final"] = energy_norm_distance(final, sc)
    return out


def _cone_summary(cfg, obs: _RowObserver) -> Optional[dict]:
    c = cfg.cone
    if c is None:
        return None
    out = {"x0": list(c.x0), "t0": c.t0, "S": c.S, "T": c.T,
           "mask_width": dg.MASK_WIDTH_CELLS * cfg.grid.h, "mask_align": "inner",
           "flux_residual": None, "flux": None, "morawetz_interaction": None, "note": None}
    if not obs.track_cone:
        out["note"] = "run started inside the cone window; trajectory integrals not available"
        return out
    try:
        out["flux_residual"], out["flux"] = obs.flux.result()
    except (dg.CoverageError, TypeError) as exc:
        out["note"] = f"flux: {exc}"
    try:
        out["morawetz_interaction"] = obs.mor.result()
    except dg.CoverageError as exc:
        out["note"] = f"morawetz: {exc}"
    return out


def _config_dict(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d["dt"] = cfg.step
    return d


def _paths(cfg: ExperimentConfig, out: Optional[str], suffix: str = "") -> dict:
    root = cfg.output_dir(out)
    root.mkdir(parents=True, exist_ok=True)
    stem = cfg.prefix + suffix
    return {
        "csv": root / f"{stem}.csv",
        "snapshot": root / f"{stem}_final.wpl",
        "summary": root / f"{stem}_summary.json",
        "scattering": root / f"{stem}_scattering.wpl",
    }


def _emit(cfg, outcome: RunOutcome, paths: dict) -> RunOutcome:
    io.write_snapshot(paths["snapshot"], outcome.final, cfg.params)
    outcome.summary["snapshot"] = str(paths["snapshot"])
    if outcome.scattering is not None:
        io.write_scattering_state(paths["scattering"], outcome.scattering, cfg.params)
        outcome.summary["scatter"]["snapshot"] = str(paths["scattering"])
    io.write_summary(paths["summary"], outcome.summary)
    outcome.paths = {k: v for k, v in paths.items() if k != "scattering" or outcome.scattering is not None}
    return outcome


def run(cfg: ExperimentConfig, out: Optional[str] = None) -> RunOutcome:
    """Execute a validated config and write CSV, final snapshot and JSON summary."""
    cfg.validate()
    paths = _paths(cfg, out)
    log.info("run %s -> %s", cfg.source or "<config>", paths["csv"].parent)
    return _emit(cfg, execute(cfg, csv_path=paths["csv"]), paths)


def resume(snapshot, cfg: ExperimentConfig, out: Optional[str] = None) -> RunOutcome:
    """Continue a run from a snapshot up to ``cfg.T``.

    The snapshot's grid and coupling must match the config exactly.  Rows
    from the snapshot time on are bit-identical to those of the
    uninterrupted run; drift is measured against the config's initial data.
    """
    cfg.validate()
    s, p = io.read_snapshot(snapshot)
    problems = []
    g = cfg.grid
    if (s.grid.d, s.grid.n, s.grid.L) != (g.d, g.n, g.L):
        problems.append(f"snapshot grid (d={s.grid.d}, n={s.grid.n}, L={s.grid.L}) "
                        f"does not match config (d={g.d}, n={g.n}, L={g.L})")
    if p != cfg.params:
        problems.append(f"snapshot parameters {p} do not match config {cfg.params}")
    if s.t > cfg.T + 1e-12:
        problems.append(f"snapshot time {s.t} is past run.T={cfg.T}")
    k = round(s.t / cfg.step)
    if abs(k * cfg.step - s.t) > 1e-12 * max(1.0, s.t):
        problems.append(f"snapshot time {s.t} is not on the step lattice of dt={cfg.step}")
    if problems:
        raise ConfigError(problems)
    state = State(g, *s.fields(), t=s.t)
    paths = _paths(cfg, out, "_resumed")
    return _emit(cfg, execute(cfg, start=state, csv_path=paths["csv"], resumed_from=str(snapshot)), paths)


# -- sweeps ------------------------------------------------------------------


@dataclass
class SweepSpec:
    base: ExperimentConfig
    pairs: list
    amplitudes: list
    amplitude_pair: Optional[tuple]

    def jobs(self) -> list[tuple[str, float, float, float]]:
        out = [("pair", a, b, self.base.amplitude) for a, b in self.pairs]
        if self.amplitudes:
            a, b = self.amplitude_pair or self.pairs[0]
            out += [("amplitude", a, b, amp) for amp in self.amplitudes]
        return out


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def load_sweep(path) -> SweepSpec:
    """A sweep file is a config plus ``sweep.*`` keys (see README)."""
    path = Path(path)
    pairs_raw = read_pairs(path.read_text())
    sw = {k[len("sweep."):]: v for k, v in pairs_raw.items() if k.startswith("sweep.")}
    problems = []
    allowed = {"pairs", "sums", "ratios", "amplitudes", "amplitude_pair", "blowup_threshold"}
    problems += [f"unknown key 'sweep.{k}'" for k in sw if k not in allowed]
    try:
        base = config_from_pairs(pairs_raw, extra_sections=("sweep",), source=str(path))
    except ConfigError as exc:
        problems += exc.problems
        base = None
    pairs: list[tuple[float, float]] = []
    try:
        for item in sw.get("pairs", "").split(","):
            if item.strip():
                a, b = item.split(":")
                pairs.append((float(a), float(b)))
        if "sums" in sw:
            ratios = _floats(sw.get("ratios", "0.5"))
            for total in _floats(sw["sums"]):
                for r in ratios:
                    if not 0 <= r <= 1:
                        problems.append(f"sweep.ratios entries must lie in [0, 1], got {r}")
                    pairs.append((r * total, (1 - r) * total))
        amps = _floats(sw.get("amplitudes", ""))
        apair = None
        if "amplitude_pair" in sw:
            a, b = sw["amplitude_pair"].split(":")
            apair = (float(a), float(b))
    except ValueError as exc:
        problems.append(f"sweep: {exc}")
        amps, apair = [], None
    if not pairs:
        problems.append("sweep needs sweep.pairs or sweep.sums")
    problems += [f"pair ({a}, {b}) has a negative exponent" for a, b in pairs if a < 0 or b < 0]
    if problems:
        raise ConfigError(problems)
    if "blowup_threshold" in sw:
        base = base.with_overrides(blowup_threshold=float(sw["blowup_threshold"]))
    return SweepSpec(base, pairs, amps, apair)


def _sweep_row(args) -> dict:
    base, (kind, alpha, beta, amp) = args
    row = {"kind": kind, "alpha": alpha, "beta": beta, "amplitude": amp, "verdict": "error",
           "detection_time": None, "max_sup": None, "drift_rel": None, "t_final": None, "error": None}
    try:
        cfg = base.with_overrides(alpha=alpha, beta=beta, amplitude=amp).validate()
        res = execute(cfg)
        s = res.summary
        row.update(verdict=s["verdict"], max_sup=res.max_sup, drift_rel=s["drift_rel_final"],
                   t_final=s["t_final"],
                   detection_time=s["blowup"]["t"] if s["blowup"] is not None else None)
    except Exception as exc:  # a failing row is recorded, the sweep goes on
        row["error"] = f"{type(exc).__name__}: {exc}".replace("\n", " ")
    return row


def sweep(path, out: Optional[str] = None, workers: int = 1, override_horizon: bool = False) -> Path:
    """Run every (α, β[, amplitude]) job of a sweep file; rows keep the declared order."""
    spec = load_sweep(path)
    if override_horizon:
        spec.base = spec.base.with_overrides(override_horizon=True)
    jobs = [(spec.base, job) for job in spec.jobs()]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(j) for j in jobs]
    root = spec.base.output_dir(out)
    root.mkdir(parents=True, exist_ok=True)
    dest = root / f"{spec.base.prefix}_sweep.csv"
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([io.format_cell(r[c]) for c in SWEEP_COLUMNS])
    return dest


def read_sweep(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SWEEP_COLUMNS:
            raise ValueError(f"{path}: header {reader.fieldnames} does not match {list(SWEEP_COLUMNS)}")
        return list(reader)
