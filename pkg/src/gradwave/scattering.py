"""Critical exponents, admissible pairs, and numerical scattering states.

A solution ``U(t) = (u, u_t)`` of ``u_tt - Δu = f`` satisfies

    A(-t)U(t) = U(0) + ∫₀ᵗ A(-s)(0, f(s)) ds,

where ``A(t)`` is the free flow.  The scattering data at horizon ``T`` are
the right-hand side at ``t = T``; their free evolution reproduces the
nonlinear solution at ``T`` and approximates it wherever the remaining
source integral is small.  The integral is taken by the trapezoid rule
over stored snapshots.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Literal, Optional

import numpy as np

from . import spectral
from .core import CouplingParams, Grid, State
from .diagnostics import CoverageError
from .solver import Trajectory, from_spectral, integrate, make_source, to_spectral

SMALL_DATA_ENERGY_NORM = 0.1
MAX_STRIDE_STEPS = 8


def critical_exponent(d: int, alpha: float, beta: float) -> float:
    """Scaling-critical regularity ``d/2 - 2/(α+β+2)``."""
    if d not in (2, 3, 4):
        raise ValueError(f"dimension must be 2, 3 or 4, got {d}")
    if alpha < 0 or beta < 0:
        raise ValueError("exponents must be >= 0")
    return d / 2 - 2 / (alpha + beta + 2)


def is_wave_admissible(q: float, r: float, d: int) -> bool:
    """``2 <= q <= ∞``, ``2 <= r < ∞`` and ``1/q <= (d-1)/2 (1/2 - 1/r)``."""
    if not (2 <= q <= math.inf and 2 <= r < math.inf):
        return False
    return 1 / q <= (d - 1) / 2 * (0.5 - 1 / r)


@dataclass(frozen=True)
class AdmissiblePair:
    q: float
    r: float
    d: int

    @property
    def gamma(self) -> float:
        return (self.d - 1) * (0.5 - 1 / self.r)

    @property
    def delta(self) -> float:
        return self.d * (0.5 - 1 / self.r)

    @property
    def eta(self) -> float:
        return (self.d + 1) / 2 * (0.5 - 1 / self.r)

    @property
    def admissible(self) -> bool:
        return is_wave_admissible(self.q, self.r, self.d)


def spacetime_norm(states: Iterable[State], q: float, r: float, field: str = "u") -> float:
    """``‖w‖_{L^q_t L^r_x}`` over the stored times (trapezoid in t), finite q and r."""
    if math.isinf(q) or math.isinf(r):
        raise ValueError("space-time norms are computed for finite exponents only")
    ts, vals = [], []
    for s in getattr(states, "states", states):
        ts.append(s.t)
        vals.append(spectral.lp_norm(getattr(s, field), r, s.grid) ** q)
    if len(ts) < 2:
        return 0.0
    return float(np.trapezoid(vals, ts)) ** (1 / q)


# -- scattering states ---------------------------------------------------------

Direction = Literal["future", "past"]


@dataclass
class ScatteringState:
    """Free data ``(u₁, u₂), (v₁, v₂)`` at ``t = 0`` whose linear flow tracks the run."""

    grid: Grid
    u1: np.ndarray
    u2: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    direction: str
    horizon: float

    def as_state(self) -> State:
        return State(self.grid, self.u1, self.u2, self.v1, self.v2, t=0.0)

    def free_state(self, t: float) -> State:
        """The free evolution of the scattering data at time ``t``."""
        return spectral.propagate_linear(self.as_state(), t)


class DuhamelAccumulator:
    """Streaming trapezoid of ``∫ A(-s)(0, f(s)) ds`` over fed snapshots."""

    def __init__(self, grid: Grid, p: CouplingParams, dealias: bool = True):
        self.grid, self.p = grid, p
        self.plan = spectral.plan_for(grid)
        self.source = make_source(grid, p, dealias)
        self.W0: Optional[np.ndarray] = None
        self.integral: Optional[np.ndarray] = None
        self.t_first: Optional[float] = None
        self.t_last: Optional[float] = None
        self.max_gap = 0.0
        self._prev: Optional[np.ndarray] = None

    def _integrand(self, s: State) -> np.ndarray:
        c, k, m = self.plan.rotation(-s.t)
        U = self.plan.forward(s.u)
        V = self.plan.forward(s.v)
        a, b = self.source(U, V, (s.u, s.v))
        # A(-s)(0, f) = (K(-s) f, cos(s|ξ|) f)
        return np.stack([k * a, c * a, k * b, c * b])

    def __call__(self, s: State) -> None:
        g = self._integrand(s)
        if self._prev is None:
            X = to_spectral(s)
            c, k, m = self.plan.rotation(-s.t)
            self.W0 = np.stack([c * X[0] + k * X[1], m * X[0] + c * X[1],
                                c * X[2] + k * X[3], m * X[2] + c * X[3]])
            self.integral = np.zeros_like(g)
            self.t_first = s.t
        else:
            dt = s.t - self.t_last
            self.max_gap = max(self.max_gap, dt)
            self.integral += 0.5 * dt * (self._prev + g)
        self._prev = g
        self.t_last = s.t

    def result(self) -> np.ndarray:
        if self.W0 is None:
            raise CoverageError("no snapshots were fed to the extraction")
        return self.W0 + self.integral


def _energy_norm0(s: State) -> float:
    plan = spectral.plan_for(s.grid)
    tot = 0.0
    for w, wt in ((s.u, s.ut), (s.v, s.vt)):
        tot += plan.l2_sq(plan.kabs * plan.forward(w)) + plan.l2_sq(plan.forward(wt))
    return math.sqrt(tot)


def extract_scattering_state(
    traj: Trajectory,
    p: CouplingParams,
    direction: Direction = "future",
    horizon: Optional[float] = None,
    dealias: bool = True,
) -> ScatteringState:
    """Scattering data of a run, from its snapshots up to ``horizon``.

    For ``direction="past"`` the trajectory must be the forward run of the
    time-reversed data ``(u₀, -u₁)``; the result is reversed back (velocity
    components negated), which is the past scattering state of ``(u₀, u₁)``.
    """
    if direction not in ("future", "past"):
        raise ValueError(f"direction must be 'future' or 'past', got {direction!r}")
    states = [s for s in traj.states if horizon is None or s.t <= horizon + 1e-9]
    T_ext = states[-1].t if horizon is None and states else horizon
    if traj.blowup is not None and (T_ext is None or traj.blowup.t <= T_ext):
        raise CoverageError(f"run blew up at t={traj.blowup.t:g} before the extraction horizon")
    if not states or abs(states[-1].t - T_ext) > 1e-9:
        last = states[-1].t if states else float("nan")
        raise CoverageError(f"trajectory ends at t={last:g}, extraction horizon is {T_ext:g}")
    if traj.stride > MAX_STRIDE_STEPS:
        raise CoverageError(f"snapshot stride {traj.stride} exceeds {MAX_STRIDE_STEPS} steps")
    acc = DuhamelAccumulator(traj.grid, p, dealias)
    for s in states:
        acc(s)
    if acc.max_gap > MAX_STRIDE_STEPS * traj.dt * (1 + 1e-9):
        raise CoverageError(f"snapshot gap {acc.max_gap:g} exceeds {MAX_STRIDE_STEPS}*dt")
    return _finish(acc, states[0], direction, T_ext)


def reversed_data(s: State) -> State:
    """``(u, -u_t, v, -v_t)``: the data whose forward run is the backward run of ``s``."""
    return State(s.grid, s.u, -s.ut, s.v, -s.vt, t=s.t)


def scattering_state_from_data(
    s0: State,
    T_ext: float,
    dt: float,
    p: CouplingParams,
    direction: Direction = "future",
    dealias: bool = True,
    observers=(),
    **integrate_kwargs,
) -> tuple[ScatteringState, Trajectory]:
    """Run from ``s0`` to ``T_ext`` and extract the scattering state on the fly.

    Every step feeds the source integral, so no trajectory is stored.  For
    ``direction="past"`` the run is made on :func:`reversed_data`.  Extra
    ``observers`` see the (possibly reversed) states.
    """
    if direction not in ("future", "past"):
        raise ValueError(f"direction must be 'future' or 'past', got {direction!r}")
    start = s0 if direction == "future" else reversed_data(s0)
    acc = DuhamelAccumulator(s0.grid, p, dealias)
    traj = integrate(start, T_ext, dt, p, observers=[acc, *observers], store=False, dealias=dealias,
                     **integrate_kwargs)
    if traj.blowup is not None:
        raise CoverageError(f"run blew up at t={traj.blowup.t:g} before the extraction horizon")
    return _finish(acc, start, direction, start.t + T_ext), traj


def _finish(acc: DuhamelAccumulator, first: State, direction: str, T_ext: float) -> ScatteringState:
    if _energy_norm0(first) > SMALL_DATA_ENERGY_NORM:
        warnings.warn("scattering extraction outside the small-data regime", stacklevel=3)
    st = from_spectral(acc.grid, acc.result(), 0.0)
    u2, v2 = st.ut, st.vt
    if direction == "past":
        u2, v2 = -u2, -v2
    return ScatteringState(acc.grid, st.u, u2, st.v, v2, direction, T_ext)


def energy_norm_distance(s: State, free: ScatteringState, t: Optional[float] = None,
                         variant: str = "standard") -> float:
    """Distance between ``s`` and the free evolution of ``free`` at time ``t``.

    ``variant="standard"`` sums ``(½[‖∇δw‖² + ‖∂_t δw‖²])^{1/2}`` over the two
    components; ``variant="printed"`` uses ``(½[‖|∇|δw‖² + ‖δw‖²])^{1/2}``.
    """
    t = s.t if t is None else t
    ref = free.free_state(t)
    plan = spectral.plan_for(s.grid)
    total = 0.0
    for a, b in (("u", "ut"), ("v", "vt")):
        D = plan.forward(getattr(s, a) - getattr(ref, a))
        if variant == "standard":
            Dt = plan.forward(getattr(s, b) - getattr(ref, b))
            sq = plan.l2_sq(plan.kabs * D) + plan.l2_sq(Dt)
        elif variant == "printed":
            sq = plan.l2_sq(plan.kabs * D) + plan.l2_sq(D)
        else:
            raise ValueError(f"unknown energy-norm variant {variant!r}")
        total += math.sqrt(0.5 * sq)
    return total


@dataclass
class NormSeries:
    s: float
    t: np.ndarray
    u: np.ndarray
    v: np.ndarray
    ut: np.ndarray
    vt: np.ndarray

    @property
    def combined(self) -> np.ndarray:
        """``(‖u‖²_{Ḣ^s} + ‖u_t‖²_{Ḣ^{s-1}} + same for v)^{1/2}``."""
        return np.sqrt(self.u**2 + self.ut**2 + self.v**2 + self.vt**2)

    def sup(self) -> dict[str, float]:
        return {k: float(np.max(getattr(self, k))) for k in ("u", "v", "ut", "vt", "combined")}


class NormSeriesAccumulator:
    """Streaming :func:`critical_norm_series` for runs that do not store states."""

    def __init__(self, s: float):
        self.s = s
        self.rows: list[tuple] = []

    def __call__(self, st: State) -> None:
        g = st.grid
        self.rows.append((st.t, spectral.sobolev_norm(st.u, self.s, g), spectral.sobolev_norm(st.v, self.s, g),
                                 spectral.sobolev_norm(st.ut, self.s - 1, g), spectral.sobolev_norm(st.vt, self.s - 1, g)))

    def result(self) -> NormSeries:
        arr = np.array(self.rows).reshape(-1, 5)
        return NormSeries(self.s, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4])


def critical_norm_series(states, s: float) -> NormSeries:
    """``Ḣ^s`` of ``u, v`` and ``Ḣ^{s-1}`` of ``u_t, v_t`` along a trajectory."""
    acc = NormSeriesAccumulator(s)
    for st in getattr(states, "states", states):
        acc(st)
    return acc.result()
