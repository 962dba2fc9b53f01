"""Energies, light-cone localized quantities and per-time diagnostic records.

Conserved energy.  For ``u_tt - Δu = f₁``, ``v_tt - Δv = f₂`` with the sign
``σ`` of :mod:`gradwave.nonlinear`, multiplying by ``A·u_t`` and ``B·v_t``
gives the exactly conserved

    E_w = ½[A(‖u_t‖² + ‖∇u‖²) + B(‖v_t‖² + ‖∇v‖²)] - σλμ∫|u|^{α+2}|v|^{β+2}.

With ``σ = -1`` this is half the textbook weighted energy (weights
``A = μ(α+2)``, ``B = λ(β+2)``, potential ``+λμ∫...``); the density ``e_w``
and the mantle flux density ``d`` below carry the same ``-σ`` factor.

Cone quantities.  A backward cone with vertex ``(x0, t0)`` has sections
``D(t) = {|x - x0| <= t0 - t}`` and lateral mantle ``M``.  Ball integrals use
an indicator ramped linearly over the inner ``2h`` (:func:`ball_mask`); mantle
integrals use a product quadrature on the sphere of radius ``t0 - t`` with
multilinear interpolation of the fields, and the trapezoid rule in time.
The flux balance checked by :func:`flux_identity_residual` is

    E(D(T)) + Flux/√2 = E(D(S)),    Flux = ∫_M d do,   do = √2 dσ dt.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import ndimage

from . import spectral
from .core import ConeSpec, CouplingParams, Grid, State
from .nonlinear import _abs_pow, potential_density

MASK_WIDTH_CELLS = 2.0


class CoverageError(ValueError):
    """The trajectory does not sample the requested time window densely enough."""


# -- global energy -------------------------------------------------------------


def kinetic_terms(s: State) -> tuple[float, float]:
    """``(‖u_t‖² + ‖∇u‖², ‖v_t‖² + ‖∇v‖²)``, spectral (Parseval) evaluation."""
    plan = spectral.plan_for(s.grid)
    out = []
    for w, wt in ((s.u, s.ut), (s.v, s.vt)):
        W = plan.forward(w)
        out.append(plan.l2_sq(plan.kabs * W) + plan.l2_sq(plan.forward(wt)))
    return out[0], out[1]


def potential_term(s: State, p: CouplingParams) -> float:
    """``λμ∫|u|^{α+2}|v|^{β+2}``."""
    return s.grid.integrate(potential_density(s.u, s.v, p))


def energy_weighted(s: State, p: CouplingParams) -> float:
    ku, kv = kinetic_terms(s)
    return 0.5 * (p.A * ku + p.B * kv) - p.sigma * potential_term(s, p)


def energy_mollified(s: State, p: CouplingParams, j: int) -> float:
    """Energy conserved by the regularized system (potential of ``h_j*u, h_j*v``)."""
    ku, kv = kinetic_terms(s)
    mu_ = spectral.mollify(s.u, j, s.grid)
    mv = spectral.mollify(s.v, j, s.grid)
    pot = s.grid.integrate(potential_density(mu_, mv, p))
    return 0.5 * (p.A * ku + p.B * kv) - p.sigma * pot


def energy_density(s: State, p: CouplingParams) -> np.ndarray:
    """Pointwise ``e_w``; its Riemann sum equals :func:`energy_weighted`.

    Gradients come from :func:`spectral.energy_gradient`, which differs from
    the plain spectral gradient only on Nyquist modes.
    """
    gu = spectral.energy_gradient(s.u, s.grid)
    gv = spectral.energy_gradient(s.v, s.grid)
    e = 0.5 * p.A * (s.ut**2 + sum(g**2 for g in gu))
    e += 0.5 * p.B * (s.vt**2 + sum(g**2 for g in gv))
    e -= p.sigma * potential_density(s.u, s.v, p)
    return e


# -- balls and cones -----------------------------------------------------------


def ball_mask(grid: Grid, x0: Sequence[float], radius: float, width: Optional[float] = None,
              align: str = "inner") -> np.ndarray:
    """Indicator of ``|x - x0| <= radius`` ramped linearly across ``width`` (default 2h).

    ``align="inner"`` ramps over ``[radius - width, radius]`` so the mask is
    supported in the closed ball (first-order in ``h``); ``"centered"``
    ramps symmetrically about ``radius`` (second-order, but leaks ``h``
    outside the ball).
    """
    width = MASK_WIDTH_CELLS * grid.h if width is None else width
    r = grid.radius(x0)
    if align == "inner":
        return np.clip((radius - r) / width, 0.0, 1.0)
    if align == "centered":
        return np.clip((radius - r) / width + 0.5, 0.0, 1.0)
    raise ValueError(f"align must be 'inner' or 'centered', got {align!r}")


def _saturates(grid: Grid, cone: ConeSpec, t: float) -> bool:
    # ball covers the whole box: mask is identically 1
    far = math.sqrt(sum((abs(c) + grid.L / 2) ** 2 for c in cone.x0))
    return cone.radius(t) - MASK_WIDTH_CELLS * grid.h >= far


def section_mask(grid: Grid, cone: ConeSpec, t: float) -> np.ndarray:
    if _saturates(grid, cone, t):
        return np.ones(grid.shape)
    cone.check_fits(grid, t)
    return ball_mask(grid, cone.x0, max(cone.radius(t), 0.0))


def cone_energy(s: State, cone: ConeSpec, p: CouplingParams) -> float:
    """Energy in the section ``D(s.t)`` of the cone.

    A section covering the whole box returns :func:`energy_weighted` itself.
    """
    if _saturates(s.grid, cone, s.t):
        return energy_weighted(s, p)
    return s.grid.integrate(section_mask(s.grid, cone, s.t) * energy_density(s, p))


def cone_potential(s: State, cone: ConeSpec, p: CouplingParams) -> float:
    """``∫_{D(s.t)} |u|^{α+2}|v|^{β+2} dx`` (no coupling constants)."""
    dens = _abs_pow(s.u, p.alpha + 2) * _abs_pow(s.v, p.beta + 2)
    return s.grid.integrate(section_mask(s.grid, cone, s.t) * dens)


def morawetz_densities(s: State, cone: ConeSpec, p: CouplingParams):
    """``Q₀`` and the vector ``P₀`` of the Morawetz identity, vertex shifted to the origin.

    Returns ``(Q0, [P0_1, ..., P0_d])`` in the coordinates ``x - x0``,
    ``t - t0`` (so ``t < 0`` inside the backward cone).
    """
    tau = s.t - cone.t0
    if tau == 0:
        raise ValueError("densities are singular at the vertex time")
    grid = s.grid
    xs = [x - c for x, c in zip(grid.coords(), cone.x0)]
    gu = spectral.gradient(s.u, grid)
    gv = spectral.gradient(s.v, grid)
    A, B = p.A, p.B
    F = potential_density(s.u, s.v, p)
    e = 0.5 * A * (s.ut**2 + sum(g**2 for g in gu)) + 0.5 * B * (s.vt**2 + sum(g**2 for g in gv))
    e = e - p.sigma * F
    xdu = sum(x * g for x, g in zip(xs, gu)) / tau
    xdv = sum(x * g for x, g in zip(xs, gv)) / tau
    Q0 = e + A * xdu * s.ut + B * xdv * s.vt
    d = grid.d
    scal = 0.5 * (A * (s.ut**2 - sum(g**2 for g in gu)) + B * (s.vt**2 - sum(g**2 for g in gv))) + p.sigma * F
    cu = s.ut + xdu + (d - 1) * s.u / (2 * tau)
    cv = s.vt + xdv + (d - 1) * s.v / (2 * tau)
    P0 = [x / tau * scal + A * g1 * cu + B * g2 * cv for x, g1, g2 in zip(xs, gu, gv)]
    return Q0, P0


# -- sphere quadrature and mantle flux ------------------------------------------


def sphere_quadrature(d: int, radius: float, spacing: float) -> tuple[np.ndarray, np.ndarray]:
    """Points (``(m, d)`` unit normals) and weights for ``∫_{|y|=radius} g dσ``.

    Circle: uniform angles.  2-sphere: Gauss-Legendre in ``cos θ`` times
    uniform ``φ``.  3-sphere: Gauss-Legendre in each polar angle (with the
    ``sin²ψ`` Jacobian in the weights) times uniform ``φ``.  The point
    spacing on the sphere is about ``spacing``.
    """
    if radius <= 0:
        return np.zeros((0, d)), np.zeros(0)
    nphi = max(16, 2 * math.ceil(math.pi * radius / spacing))
    phi = 2 * np.pi * np.arange(nphi) / nphi
    if d == 2:
        pts = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        return pts, np.full(nphi, 2 * np.pi * radius / nphi)
    nth = max(8, nphi // 2)
    x, w = np.polynomial.legendre.leggauss(nth)
    if d == 3:
        ct, cp = np.meshgrid(x, phi, indexing="ij")
        st = np.sqrt(1 - ct**2)
        pts = np.stack([ct, st * np.cos(cp), st * np.sin(cp)], axis=-1).reshape(-1, 3)
        wts = (w[:, None] * np.full(nphi, 2 * np.pi / nphi)[None, :]).reshape(-1) * radius**2
        return pts, wts
    if d == 4:
        psi = (x + 1) * np.pi / 2
        wpsi = w * np.pi / 2 * np.sin(psi) ** 2
        P, C, F = np.meshgrid(psi, x, phi, indexing="ij")
        W = np.broadcast_to(wpsi[:, None, None] * w[None, :, None] * (2 * np.pi / nphi), P.shape)
        S = np.sqrt(1 - C**2)
        pts = np.stack(
            [np.cos(P), np.sin(P) * C, np.sin(P) * S * np.cos(F), np.sin(P) * S * np.sin(F)], axis=-1
        ).reshape(-1, 4)
        return pts, W.reshape(-1) * radius**3
    raise ValueError(f"unsupported dimension {d}")


def _interp(grid: Grid, f: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return ndimage.map_coordinates(f, idx, order=1, mode="grid-wrap")


def mantle_density_integral(s: State, cone: ConeSpec, p: CouplingParams) -> float:
    """``∫_{|x-x0| = t0-t} d(u, v) dσ`` at the time of ``s``."""
    grid = s.grid
    R = cone.radius(s.t)
    normals, wts = sphere_quadrature(grid.d, R, grid.h / 2)
    if wts.size == 0:
        return 0.0
    pts = np.asarray(cone.x0)[None, :] + R * normals
    idx = ((pts + grid.L / 2) / grid.h).T
    gu = spectral.gradient(s.u, grid)
    gv = spectral.gradient(s.v, grid)
    u, ut, v, vt = (_interp(grid, f, idx) for f in s.fields())
    dens = -p.sigma * p.lam * p.mu * _abs_pow(u, p.alpha + 2) * _abs_pow(v, p.beta + 2)
    for wgt, w_t, grads in ((p.A, ut, gu), (p.B, vt, gv)):
        sq = 0.0
        for i, g in enumerate(grads):
            sq = sq + (normals[:, i] * w_t - _interp(grid, g, idx)) ** 2
        dens = dens + 0.5 * wgt * sq
    return float(np.sum(wts * dens))


def _check_times(times: np.ndarray, a: float, b: float, max_gap: float, what: str) -> None:
    tol = 1e-9 * max(1.0, abs(b))
    if times.size == 0 or times[0] > a + tol or times[-1] < b - tol:
        lo = times[0] if times.size else float("nan")
        hi = times[-1] if times.size else float("nan")
        raise CoverageError(f"{what}: snapshots cover [{lo:g}, {hi:g}], need [{a:g}, {b:g}]")
    if not (np.any(np.abs(times - a) <= tol) and np.any(np.abs(times - b) <= tol)):
        raise CoverageError(f"{what}: no snapshot at the window ends {a:g}, {b:g}")
    gaps = np.diff(times)
    if gaps.size and gaps.max() > max_gap * (1 + 1e-9):
        raise CoverageError(
            f"{what}: snapshot gap {gaps.max():g} exceeds {max_gap:g}; "
            f"store every stride <= {max_gap:g}/dt steps"
        )


class FluxAccumulator:
    """Streaming evaluation of the flux identity over ``[cone.S, cone.T]``.

    Feed states in time order (e.g. as an ``integrate`` observer) and call
    :meth:`result`.  Only a few scalars per snapshot are kept.
    """

    def __init__(self, cone: ConeSpec, p: CouplingParams):
        self.cone, self.p = cone, p
        self.times: list[float] = []
        self.values: list[float] = []
        self.E_S: Optional[float] = None
        self.E_T: Optional[float] = None
        self.grid: Optional[Grid] = None

    def __call__(self, s: State) -> None:
        c = self.cone
        tol = 1e-9 * max(1.0, abs(c.T))
        if s.t < c.S - tol or s.t > c.T + tol:
            return
        self.grid = s.grid
        self.times.append(s.t)
        self.values.append(mantle_density_integral(s, c, self.p))
        if abs(s.t - c.S) <= tol:
            self.E_S = cone_energy(s, c, self.p)
        if abs(s.t - c.T) <= tol:
            self.E_T = cone_energy(s, c, self.p)

    def result(self) -> tuple[float, float]:
        """``(residual, flux)`` with ``flux = ∫_M d do``."""
        c = self.cone
        times = np.array(self.times)
        if self.grid is None:
            raise CoverageError("flux identity: no snapshots inside [S, T]")
        _check_times(times, c.S, c.T, self.grid.h, "flux identity")
        if c.T == c.S:
            return 0.0, 0.0
        flux = math.sqrt(2) * float(np.trapezoid(self.values, times))
        return self.E_T + flux / math.sqrt(2) - self.E_S, flux


def flux_identity_residual(states: Iterable[State], cone: ConeSpec, p: CouplingParams) -> tuple[float, float]:
    """Residual of ``E(D(T)) + Flux/√2 - E(D(S))`` and the flux itself.

    ``states`` is a trajectory (anything with ``.states``) or an iterable of
    states; snapshots must include ``S`` and ``T`` and be at most ``h`` apart.
    """
    acc = FluxAccumulator(cone, p)
    for s in getattr(states, "states", states):
        acc(s)
    return acc.result()


class MorawetzAccumulator:
    """Streaming ``∫_S^{t0} ∫_{D(t)} λμ|u|^{α+2}|v|^{β+2} dx dt``."""

    def __init__(self, cone: ConeSpec, p: CouplingParams, S: Optional[float] = None, t_end: Optional[float] = None):
        self.cone, self.p = cone, p
        self.S = cone.S if S is None else S
        self.t_end = cone.t0 if t_end is None else t_end
        self.times: list[float] = []
        self.values: list[float] = []

    def __call__(self, s: State) -> None:
        tol = 1e-9 * max(1.0, abs(self.t_end))
        if s.t < self.S - tol or s.t > self.t_end + tol:
            return
        self.times.append(s.t)
        self.values.append(s.grid.integrate(section_mask(s.grid, self.cone, s.t) * potential_density(s.u, s.v, self.p)))

    def result(self, max_gap: float = math.inf) -> float:
        times = np.array(self.times)
        _check_times(times, self.S, self.t_end, max_gap, "morawetz interaction")
        return float(np.trapezoid(self.values, times))


def morawetz_interaction(states, cone: ConeSpec, p: CouplingParams, S: Optional[float] = None,
                         t_end: Optional[float] = None) -> float:
    """Interaction term of the Morawetz identity over the truncated cone from ``S``.

    Integrates up to the vertex ``t0`` unless ``t_end`` is given.
    """
    acc = MorawetzAccumulator(cone, p, S, t_end)
    for s in getattr(states, "states", states):
        acc(s)
    return acc.result()


# -- per-time records ---------------------------------------------------------

CSV_COLUMNS = (
    "t", "E_w", "E_w_drift_rel", "L2_u", "L2_v", "Hsc_u", "Hsc_v", "sup_u", "sup_v",
    "cone_E", "cone_potential", "flux_residual", "morawetz_interaction", "scatter_dist",
)


@dataclass
class DiagnosticsRecord:
    t: float
    E_w: float
    E_w_drift_rel: float
    kinetic_u: float
    kinetic_v: float
    potential: float
    L2_u: float
    L2_v: float
    Hs_u: Optional[float]
    Hs_v: Optional[float]
    sup_u: float
    sup_v: float
    sigma: int = -1
    A: float = 0.0
    B: float = 0.0
    cone_E: Optional[float] = None
    cone_potential: Optional[float] = None
    flux_residual: Optional[float] = None
    morawetz_interaction: Optional[float] = None
    scatter_dist: Optional[float] = None

    def check(self, rtol: float = 1e-12) -> None:
        recomputed = 0.5 * (self.A * self.kinetic_u + self.B * self.kinetic_v) - self.sigma * self.potential
        if abs(recomputed - self.E_w) > rtol * max(1.0, abs(self.E_w)):
            raise ValueError(f"inconsistent record at t={self.t}: E_w={self.E_w} vs {recomputed}")

    def csv_values(self) -> dict:
        row = asdict(self)
        row["Hsc_u"], row["Hsc_v"] = row.pop("Hs_u"), row.pop("Hs_v")
        return {k: row[k] for k in CSV_COLUMNS}


def _safe_hs(f: np.ndarray, s: float, grid: Grid) -> Optional[float]:
    try:
        return spectral.sobolev_norm(f, s, grid)
    except spectral.ZeroModeError:
        return None


def make_record(state: State, p: CouplingParams, E0: float, s_norm: Optional[float] = None,
                cone: Optional[ConeSpec] = None) -> DiagnosticsRecord:
    """Slice diagnostics of one state; cone columns are filled while the
    state time lies in the cone's section window ``[S, T]``."""
    grid = state.grid
    ku, kv = kinetic_terms(state)
    pot = potential_term(state, p)
    E = 0.5 * (p.A * ku + p.B * kv) - p.sigma * pot
    drift = (E - E0) / abs(E0) if E0 != 0 else (0.0 if E == 0 else math.inf)
    rec = DiagnosticsRecord(
        t=state.t, E_w=E, E_w_drift_rel=drift, kinetic_u=ku, kinetic_v=kv, potential=pot,
        L2_u=spectral.sobolev_norm(state.u, 0, grid), L2_v=spectral.sobolev_norm(state.v, 0, grid),
        Hs_u=None if s_norm is None else _safe_hs(state.u, s_norm, grid),
        Hs_v=None if s_norm is None else _safe_hs(state.v, s_norm, grid),
        sup_u=float(np.max(np.abs(state.u))), sup_v=float(np.max(np.abs(state.v))),
        sigma=p.sigma, A=p.A, B=p.B,
    )
    if cone is not None and cone.S - 1e-12 <= state.t <= cone.T + 1e-12:
        rec.cone_E = cone_energy(state, cone, p)
        rec.cone_potential = cone_potential(state, cone, p)
    rec.check()
    return rec


RECORD_FIELDS = tuple(f.name for f in fields(DiagnosticsRecord))
