"""Built-in invariant suite behind ``gradwave verify`` (small grids, seconds)."""
from __future__ import annotations

import math
import tempfile
from pathlib import Path
from typing import Callable

import numpy as np

from .. import diagnostics as dg
from .. import nonlinear, solver, spectral
from ..core import ConeSpec, CouplingParams, Grid, State, gaussian, make_state
from . import io

Check = Callable[[], tuple[bool, str]]


def _gradient() -> tuple[bool, str]:
    worst = max(nonlinear.verify_gradient_structure(CouplingParams(*c)).max_rel_error
                for c in ((1, 1, 0, 2), (2, 3, 1, 2), (1, 1, 0, 0)))
    return worst <= 1e-6, f"max relative error {worst:.2e} (<= 1e-6)"


def _plane_wave() -> tuple[bool, str]:
    g = Grid(2, 32, 2 * math.pi)
    x, y = g.coords()
    t = 0.7
    s = State(g, np.cos(3 * x + 4 * y), g.zeros() + 0 * y, g.zeros(), g.zeros())
    out = spectral.propagate_linear(s, t)
    err = float(np.max(np.abs(out.u - np.cos(3 * x + 4 * y) * np.cos(5 * t))))
    return err <= 1e-12, f"plane wave error {err:.2e} (<= 1e-12)"


def _group_law() -> tuple[bool, str]:
    g = Grid(3, 16, 8.0)
    s = make_state(g, u=gaussian(1, 1), ut=gaussian(0.5, 1.3), v=gaussian(1, 0.8))
    a = spectral.propagate_linear(spectral.propagate_linear(s, 0.3), 0.4)
    b = spectral.propagate_linear(s, 0.7)
    back = spectral.propagate_linear(b, -0.7)
    e1 = max(float(np.max(np.abs(x - y))) for x, y in zip(a.fields(), b.fields()))
    e2 = max(float(np.max(np.abs(x - y))) for x, y in zip(back.fields(), s.fields()))
    return max(e1, e2) <= 1e-12, f"group law {e1:.2e}, time reversal {e2:.2e} (<= 1e-12)"


def _decoupling() -> tuple[bool, str]:
    g = Grid(3, 16, 16.0)
    s = make_state(g, u=gaussian(1, 1), ut=gaussian(0.3, 1))
    p = CouplingParams(1, 1, 0, 2, -1)
    run = solver.integrate(s, 1.0, 0.25, p, store=False).final
    lin = spectral.propagate_linear(s, 1.0)
    err = max(float(np.max(np.abs(x - y))) for x, y in zip(run.fields(), lin.fields()))
    return err <= 1e-12, f"v = 0 run vs free flow {err:.2e} (<= 1e-12)"


def _energy() -> tuple[bool, str]:
    g = Grid(3, 16, 16.0)
    p = CouplingParams(1, 1, 0, 2, -1)
    s = solver.dealias_project(make_state(g, u=gaussian(1.5, 1.5), v=gaussian(1.5, 1.5, (0.5, 0, 0))))
    E0 = dg.energy_weighted(s, p)
    drifts = []
    for dt in (0.1, 0.05):
        end = solver.integrate(s, 1.0, dt, p, store=False).final
        drifts.append(abs(dg.energy_weighted(end, p) - E0) / E0)
    ratio = drifts[0] / drifts[1] if drifts[1] > 0 else math.inf
    return drifts[1] <= 1e-6 and ratio >= 8, f"drift {drifts[1]:.2e}, halving ratio {ratio:.1f} (>= 8)"


def _cone_saturation() -> tuple[bool, str]:
    g = Grid(2, 16, 4.0)
    p = CouplingParams()
    s = make_state(g, u=gaussian(1, 0.7), v=gaussian(1, 0.7))
    cone = ConeSpec((0.0, 0.0), 100.0, 0.0, 0.0)
    a, b = dg.cone_energy(s, cone, p), dg.energy_weighted(s, p)
    return a == b, f"full-box cone energy {a!r} vs E_w {b!r}"


def _snapshot() -> tuple[bool, str]:
    g = Grid(2, 8, 1.0)
    rng = np.random.default_rng(1)
    s = State(g, *(rng.normal(size=g.shape) for _ in range(4)), t=0.125)
    p = CouplingParams(2, 3, 1, 2, 1)
    with tempfile.TemporaryDirectory() as tmp:
        path = io.write_snapshot(Path(tmp) / "s.wpl", s, p)
        back, q = io.read_snapshot(path)
    same = all(np.array_equal(x, y) for x, y in zip(s.fields(), back.fields())) and q == p and back.t == s.t
    return same, "snapshot round trip bitwise"


def _picard() -> tuple[bool, str]:
    g = Grid(3, 16, 16.0)
    p = CouplingParams(1, 1, 0, 2, -1)
    s = solver.dealias_project(make_state(g, u=gaussian(0.3, 1.5), v=gaussian(0.3, 1.5)))
    _, rep = solver.picard_local_solve(s, 0.25, p, tol=1e-15)
    ok = rep.converged and all(r <= 0.5 for r in rep.contraction_ratios)
    return ok, f"{rep.iterates} iterates, ratios {[f'{r:.1e}' for r in rep.contraction_ratios]}"


CHECKS: dict[str, Check] = {
    "gradient structure": _gradient,
    "plane wave": _plane_wave,
    "group law / time reversal": _group_law,
    "decoupling": _decoupling,
    "energy conservation": _energy,
    "cone saturation": _cone_saturation,
    "snapshot round trip": _snapshot,
    "picard contraction": _picard,
}


def run_checks(echo=print) -> bool:
    ok_all = True
    for name, fn in CHECKS.items():
        try:
            ok, msg = fn()
        except Exception as exc:  # report, keep going
            ok, msg = False, f"{type(exc).__name__}: {exc}"
        ok_all &= ok
        echo(f"[{'PASS' if ok else 'FAIL'}] {name}: {msg}")
    return ok_all
