"""Time evolution of the coupled system.

The long-run scheme is interaction-picture (Lawson) RK4: the free wave flow
is applied exactly as a per-mode rotation and only the nonlinear source is
integrated by classical RK4.  The local solver iterates the Duhamel system

    u(t) = K̇(t)u₁₀ + K(t)u₂₀ + ∫₀ᵗ K(t-τ) f₁(u, v)(τ) dτ

to a fixed point, with the τ-integral done by 4-node Gauss collocation on
each time panel.

Both schemes work on the spectral vector ``X = (û, û_t, v̂, v̂_t)`` stacked
into one complex array of shape ``(4, *spectral_shape)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from . import spectral
from .core import FIELD_NAMES, CouplingParams, Grid, State
from .nonlinear import eval_f1, eval_f2

DT_FRACTION = 0.5
DEFAULT_BLOWUP_THRESHOLD = 1e6


class HorizonError(ValueError):
    """The run would let waves wrap around the periodic box."""


class StepSizeError(ValueError):
    pass


class DivergenceError(FloatingPointError):
    pass


@dataclass
class BlowupRecord:
    t: float
    field: str
    value: float

    def as_dict(self) -> dict:
        return {"t": self.t, "field": self.field, "value": self.value}


def detect_blowup(s: State, threshold: float = DEFAULT_BLOWUP_THRESHOLD) -> Optional[BlowupRecord]:
    """Return a record if any field is non-finite or exceeds ``threshold`` in sup-norm."""
    worst = None
    for name, f in zip(FIELD_NAMES, s.fields()):
        if not np.isfinite(f).all():
            bad = f[~np.isfinite(f)]
            return BlowupRecord(s.t, name, float(bad.flat[0]))
        m = float(np.max(np.abs(f)))
        if m > threshold and (worst is None or m > worst.value):
            worst = BlowupRecord(s.t, name, m)
    return worst


# -- spectral helpers ---------------------------------------------------------


def to_spectral(s: State) -> np.ndarray:
    plan = spectral.plan_for(s.grid)
    return np.stack([plan.forward(f) for f in s.fields()])


def from_spectral(grid: Grid, X: np.ndarray, t: float) -> State:
    plan = spectral.plan_for(grid)
    return State(grid, *(plan.inverse(x) for x in X), t=t)


class _Flow:
    """The free flow ``L(t)`` acting on stacked spectral vectors."""

    def __init__(self, plan: spectral.MultiplierPlan, t: float):
        self.c, self.k, self.m = plan.rotation(t)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        c, k, m = self.c, self.k, self.m
        out = np.empty_like(X)
        out[0] = c * X[0] + k * X[1]
        out[1] = m * X[0] + c * X[1]
        out[2] = c * X[2] + k * X[3]
        out[3] = m * X[2] + c * X[3]
        return out


def make_source(
    grid: Grid, p: CouplingParams, dealias: bool = True, mollifier_j: Optional[int] = None
):
    """Build the spectral source ``(f̂₁, f̂₂)`` as a function of ``(û, v̂)``.

    The returned callable also accepts precomputed physical ``(u, v)``.
    With ``mollifier_j`` the source is ``h_j * f(h_j*u, h_j*v)``.
    """
    plan = spectral.plan_for(grid)
    mask = plan.dealias if dealias else None
    sym = None
    if mollifier_j is not None:
        sym = spectral.mollifier_symbol(plan.kabs, mollifier_j, grid.d)

    def source(U: np.ndarray, V: np.ndarray, uv: Optional[tuple[np.ndarray, np.ndarray]] = None):
        if sym is not None:
            u, v = plan.inverse(sym * U), plan.inverse(sym * V)
        elif uv is not None:
            u, v = uv
        else:
            u, v = plan.inverse(U), plan.inverse(V)
        f1 = plan.forward(eval_f1(u, v, p))
        f2 = plan.forward(eval_f2(u, v, p))
        if sym is not None:
            f1 *= sym
            f2 *= sym
        if mask is not None:
            f1 *= mask
            f2 *= mask
        return f1, f2

    return source


def _lawson_rk4(X: np.ndarray, dt: float, half: _Flow, full: _Flow, source, uv=None) -> np.ndarray:
    """Classical RK4 on ``W = L(-t)X``, written back in the lab frame.

    The source only kicks velocities and only reads displacements, so each
    stage needs just the rotated displacements.
    """
    U, Ut, V, Vt = X
    ch, kh = half.c, half.k
    c1, k1, m1 = full.c, full.k, full.m
    a1, b1 = source(U, V, uv)
    a2, b2 = source(ch * U + kh * (Ut + (dt / 2) * a1), ch * V + kh * (Vt + (dt / 2) * b1))
    a3, b3 = source(ch * U + kh * Ut, ch * V + kh * Vt)
    a4, b4 = source(c1 * U + k1 * Ut + dt * kh * a3, c1 * V + k1 * Vt + dt * kh * b3)
    out = np.empty_like(X)
    out[0] = c1 * U + k1 * Ut + (dt / 6) * (k1 * a1 + 2 * kh * (a2 + a3))
    out[1] = m1 * U + c1 * Ut + (dt / 6) * (c1 * a1 + 2 * ch * (a2 + a3) + a4)
    out[2] = c1 * V + k1 * Vt + (dt / 6) * (k1 * b1 + 2 * kh * (b2 + b3))
    out[3] = m1 * V + c1 * Vt + (dt / 6) * (c1 * b1 + 2 * ch * (b2 + b3) + b4)
    return out


class Stepper:
    """Reusable stepper: caches the rotation coefficients for one ``dt``."""

    def __init__(self, grid: Grid, dt: float, p: CouplingParams, dealias: bool = True,
                 mollifier_j: Optional[int] = None):
        plan = spectral.plan_for(grid)
        self.grid, self.dt, self.p = grid, dt, p
        self.half = _Flow(plan, dt / 2)
        self.full = _Flow(plan, dt)
        self.source = make_source(grid, p, dealias, mollifier_j)
        self.mollified = mollifier_j is not None

    def __call__(self, s: State, t_new: Optional[float] = None) -> State:
        X = to_spectral(s)
        uv = None if self.mollified else (s.u, s.v)
        Xn = _lawson_rk4(X, self.dt, self.half, self.full, self.source, uv)
        return from_spectral(self.grid, Xn, s.t + self.dt if t_new is None else t_new)


def step(s: State, dt: float, p: CouplingParams, dealias: bool = True) -> State:
    """One interaction-picture RK4 step of size ``dt``."""
    return Stepper(s.grid, dt, p, dealias)(s)


# -- long runs --------------------------------------------------------------


@dataclass
class Trajectory:
    """Time-ordered (possibly strided) snapshots of a run.

    ``states`` is empty when the run was made with ``store=False``;
    ``final`` always holds the last finite state.
    """

    states: list[State]
    dt: float
    stride: int
    scheme: str
    final: State
    blowup: Optional[BlowupRecord] = None
    steps: int = 0

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def grid(self) -> Grid:
        return self.final.grid

    def at(self, t: float, atol: float = 1e-9) -> State:
        for s in self.states:
            if abs(s.t - t) <= atol:
                return s
        raise KeyError(f"no stored state at t={t}")


Observer = Callable[[State], None]


def check_run(grid: Grid, T: float, dt: float, data_radius: Optional[float] = None,
              override_horizon: bool = False, override_dt: bool = False) -> int:
    """Validate a run and return its number of steps."""
    if T < 0:
        raise ValueError(f"T must be >= 0, got {T}")
    if T == 0:
        return 0
    if dt <= 0:
        raise StepSizeError(f"dt must be positive, got {dt}")
    nsteps = round(T / dt)
    if abs(nsteps * dt - T) > 1e-12 * max(1.0, T):
        raise StepSizeError(f"T={T} is not a multiple of dt={dt}")
    if dt > DT_FRACTION * grid.h and not override_dt:
        raise StepSizeError(f"dt={dt} exceeds {DT_FRACTION}*h={DT_FRACTION * grid.h}")
    if data_radius is not None and not override_horizon:
        horizon = grid.horizon(data_radius)
        if T > horizon:
            raise HorizonError(
                f"run to T={T} passes the box horizon {horizon:.4g} "
                f"(L/2 - 2h - data radius {data_radius:.4g})"
            )
    return nsteps


def _step_times(t0: float, dt: float, nsteps: int) -> list[float]:
    # t = k*dt on the global step lattice so resumed runs reproduce times bitwise
    k0 = round(t0 / dt)
    if abs(k0 * dt - t0) <= 1e-12 * max(1.0, abs(t0)):
        return [(k0 + k) * dt for k in range(1, nsteps + 1)]
    return [t0 + k * dt for k in range(1, nsteps + 1)]


def integrate(
    s0: State,
    T: float,
    dt: float,
    p: CouplingParams,
    observers: Iterable[Observer] = (),
    stride: int = 1,
    store: bool = True,
    blowup_threshold: float = DEFAULT_BLOWUP_THRESHOLD,
    data_radius: Optional[float] = None,
    override_horizon: bool = False,
    override_dt: bool = False,
    dealias: bool = True,
    mollifier_j: Optional[int] = None,
) -> Trajectory:
    """Advance ``s0`` by ``T`` (from ``s0.t``) in steps of ``dt``.

    Observers and storage fire at ``s0`` and every ``stride`` steps, plus the
    final state.  Blowup ends the run early with a record; it is not an error.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    nsteps = check_run(s0.grid, T, dt, data_radius, override_horizon, override_dt)
    observers = list(observers)
    stepper = Stepper(s0.grid, dt, p, dealias, mollifier_j) if nsteps else None
    states = []

    def emit(s):
        if store:
            states.append(s)
        for obs in observers:
            obs(s)

    s = s0
    emit(s)
    record = detect_blowup(s, blowup_threshold)
    done = 0
    if record is None:
        for k, t_new in enumerate(_step_times(s0.t, dt, nsteps), start=1):
            nxt = stepper(s, t_new)
            record = detect_blowup(nxt, blowup_threshold)
            if record is not None and not nxt.is_finite():
                break
            s = nxt
            done = k
            if record is not None or k % stride == 0 or k == nsteps:
                emit(s)
            if record is not None:
                break
    scheme = "lawson-rk4" + (f"-mollified-j{mollifier_j}" if mollifier_j else "")
    return Trajectory(states, dt, stride, scheme, s, record, done)


def mollify_state(s: State, j: int) -> State:
    return State(s.grid, *(spectral.mollify(f, j, s.grid) for f in s.fields()), t=s.t)


def integrate_mollified(s0: State, j: int, T: float, dt: float, p: CouplingParams, **kwargs) -> Trajectory:
    """Run the regularized system: data ``h_j*·`` and source ``h_j*f(h_j*u, h_j*v)``."""
    return integrate(mollify_state(s0, j), T, dt, p, mollifier_j=j, **kwargs)


# -- Picard iteration ---------------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)
GL_NODES = (_GL_X + 1) / 2
GL_WEIGHTS = _GL_W / 2


def _collocation_matrix() -> np.ndarray:
    """``a[q, i] = ∫₀^{x_q} ℓ_i(s) ds`` for the Lagrange basis on the GL nodes."""
    x = GL_NODES
    a = np.zeros((4, 4))
    for i in range(4):
        others = np.delete(x, i)
        poly = np.poly1d(others, r=True) / np.prod(x[i] - others)
        anti = poly.integ()
        a[:, i] = anti(x) - anti(0.0)
    return a


COLLOCATION = _collocation_matrix()


def _kick(source, X: np.ndarray) -> np.ndarray:
    N = np.zeros_like(X)
    N[1], N[3] = source(X[0], X[2])
    return N


@dataclass
class PicardReport:
    iterates: int
    diff_norms: list[float]
    contraction_ratios: list[float]
    converged: bool
    tol: float
    node_times: list[float] = field(default_factory=list)


def pair_norm(grid: Grid, D: np.ndarray) -> float:
    """``‖∇δu‖ + ‖δu‖ + ‖δu_t‖`` summed over both components (spectral input)."""
    plan = spectral.plan_for(grid)
    total = 0.0
    for a, b in ((0, 1), (2, 3)):
        total += math.sqrt(plan.l2_sq(plan.kabs * D[a]))
        total += math.sqrt(plan.l2_sq(D[a])) + math.sqrt(plan.l2_sq(D[b]))
    return total


def picard_local_solve(
    s0: State,
    T: float,
    p: CouplingParams,
    n_time_nodes: int = 16,
    max_iter: int = 12,
    tol: float = 1e-12,
    dealias: bool = True,
) -> tuple[Trajectory, PicardReport]:
    """Fixed-point iteration on the Duhamel system over ``[s0.t, s0.t + T]``.

    ``n_time_nodes`` Gauss nodes are used, four per panel.  The integrand in
    the interaction picture, ``g(τ) = L(-τ)(0, f(u(τ), v(τ)))``, is
    interpolated by the cubic through the panel's nodes, which gives both the
    node values and the end value.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if n_time_nodes < 4 or n_time_nodes % 4:
        raise ValueError(f"n_time_nodes must be a positive multiple of 4, got {n_time_nodes}")
    grid = s0.grid
    plan = spectral.plan_for(grid)
    panels = n_time_nodes // 4
    hp = T / panels
    rel = np.concatenate([(q + GL_NODES) * hp for q in range(panels)])
    source = make_source(grid, p, dealias)
    X0 = to_spectral(s0)
    fwd = [_Flow(plan, t) for t in rel]
    back = [_Flow(plan, -t) for t in rel]
    X = np.stack([L(X0) for L in fwd])

    diffs: list[float] = []
    converged = False
    iterates = 0
    for _ in range(max_iter):
        G = np.stack([back[q](_kick(source, X[q])) for q in range(len(rel))])
        new = np.empty_like(X)
        acc = np.zeros_like(X0)
        for pi in range(panels):
            sl = slice(4 * pi, 4 * pi + 4)
            Gp = G[sl]
            for q in range(4):
                part = acc + hp * np.tensordot(COLLOCATION[q], Gp, axes=1)
                new[4 * pi + q] = fwd[4 * pi + q](X0 + part)
            acc = acc + hp * np.tensordot(GL_WEIGHTS, Gp, axes=1)
        if not np.isfinite(new).all():
            raise DivergenceError("iterate diverged")
        iterates += 1
        diffs.append(max(pair_norm(grid, new[q] - X[q]) for q in range(len(rel))))
        X = new
        if diffs[-1] <= tol:
            converged = True
            break
    # end value from the converged node values
    G = np.stack([back[q](_kick(source, X[q])) for q in range(len(rel))])
    integral = hp * sum(np.tensordot(GL_WEIGHTS, G[4 * pi:4 * pi + 4], axes=1) for pi in range(panels))
    XT = _Flow(plan, T)(X0 + integral)
    ratios = [b / a for a, b in zip(diffs, diffs[1:]) if a > 0]
    states = [s0] + [from_spectral(grid, X[q], s0.t + rel[q]) for q in range(len(rel))]
    states.append(from_spectral(grid, XT, s0.t + T))
    traj = Trajectory(states, hp / 4, 1, "picard-gauss4", states[-1])
    report = PicardReport(iterates, diffs, ratios, converged, tol, [s0.t + t for t in rel])
    return traj, report


def dealias_project(s: State) -> State:
    """Zero the top third of every field's spectrum.

    Runs with de-aliasing evolve those modes freely; projecting the data
    removes them so the semi-discrete energy is conserved exactly.
    """
    plan = spectral.plan_for(s.grid)
    return State(s.grid, *(plan.inverse(plan.dealias * plan.forward(f)) for f in s.fields()), t=s.t)
