"""Fourier multipliers on the periodic grid.

All transforms are real-to-complex (``scipy.fft.rfftn``) over every axis.
Wavenumbers are ``ξ = 2πk/L`` with integer ``k ∈ [-n/2, n/2)``; the Nyquist
column of the last axis carries ``|k| = n/2``.

Norm convention: continuum integrals are Riemann sums, so
``‖f‖_p ≈ (h^d Σ|f_i|^p)^{1/p}``.  The spectral ``L²`` norm obeys the same
convention via Parseval.

Multipliers that are singular at ``ξ = 0`` are replaced by their limits
(``sin(|ξ|t)/|ξ| → t``), and homogeneous norms of negative order refuse
fields with a nonzero mean instead of silently dropping it.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy import special

from .core import Grid, State

ZERO_MODE_RTOL = 1e-12


class ZeroModeError(ValueError):
    """Negative-order multiplier applied to a field with nonzero mean."""


class MultiplierPlan:
    """Cached wavenumbers and Parseval weights for one grid.  Immutable."""

    def __init__(self, grid: Grid):
        self.grid = grid
        d, n, L = grid.d, grid.n, grid.L
        full = sfft.fftfreq(n, d=1.0 / n)
        half = sfft.rfftfreq(n, d=1.0 / n)
        ks = [full] * (d - 1) + [half]
        self.xi = [
            (2 * np.pi / L * k).reshape([-1 if a == i else 1 for a in range(d)])
            for i, k in enumerate(ks)
        ]
        xi2 = sum(x**2 for x in self.xi)
        self.xi2 = np.broadcast_to(xi2, self.spectral_shape).copy()
        self.kabs = np.sqrt(self.xi2)
        self.kabs.flags.writeable = False
        self.xi2.flags.writeable = False
        # rfft stores each conjugate pair once, except the 0 and Nyquist columns
        w = np.full(half.size, 2.0)
        w[0] = 1.0
        if n % 2 == 0:
            w[-1] = 1.0
        self.parseval = w.reshape([1] * (d - 1) + [-1])
        # Nyquist planes have no real-valued odd-derivative counterpart
        self.xi_odd = []
        for i, x in enumerate(self.xi):
            x = x.copy()
            idx = [slice(None)] * d
            idx[i] = n // 2
            if x.shape[i] > n // 2:
                x[tuple(idx)] = 0.0
            self.xi_odd.append(x)
        # energy-consistent derivative: i·ξ off the Nyquist planes, |ξ| on them
        # (real, even); Σ_i |m_i|² = |ξ|² on every mode, so Parseval makes
        # Σ_i ∫ (m_i f)² equal the spectral ‖∇f‖² exactly
        self.xi_energy = [1j * xo + np.abs(x - xo) for x, xo in zip(self.xi, self.xi_odd)]
        kmax = np.pi * n / L
        self.dealias = np.ones(self.spectral_shape, dtype=bool)
        for x in self.xi:
            self.dealias &= np.abs(x) < (2.0 / 3.0) * kmax

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        n = self.grid.n
        return (n,) * (self.grid.d - 1) + (n // 2 + 1,)

    def forward(self, f: np.ndarray) -> np.ndarray:
        return sfft.rfftn(f)

    def inverse(self, F: np.ndarray) -> np.ndarray:
        return sfft.irfftn(F, s=self.grid.shape)

    def l2_sq(self, F: np.ndarray) -> float:
        """Continuum ``‖f‖²₂`` from the half spectrum ``F`` of ``f``."""
        N = self.grid.n**self.grid.d
        return float(np.sum(self.parseval * (F.real**2 + F.imag**2))) * self.grid.cell_volume / N

    def inner(self, F: np.ndarray, G: np.ndarray) -> float:
        """Continuum ``∫ f g`` from half spectra."""
        N = self.grid.n**self.grid.d
        return float(np.sum(self.parseval * (F * G.conj()).real)) * self.grid.cell_volume / N

    def mean(self, F: np.ndarray) -> float:
        return float(F.flat[0].real) / self.grid.n**self.grid.d

    def power(self, s: float, F: np.ndarray) -> np.ndarray:
        """``|ξ|^s`` as an array, checked against the zero mode of ``F``."""
        if s == 0:
            return np.ones(self.spectral_shape)
        with np.errstate(divide="ignore"):
            m = self.kabs**s
        m.flat[0] = 0.0
        if s < 0:
            _check_zero_mean(self, F)
        return m

    def rotation(self, t: float):
        """``(cos(|ξ|t), sin(|ξ|t)/|ξ|, -|ξ|sin(|ξ|t))`` with zero-mode limits."""
        wt = self.kabs * t
        c = np.cos(wt)
        sn = np.sin(wt)
        with np.errstate(divide="ignore", invalid="ignore"):
            k = sn / self.kabs
        k.flat[0] = t
        return c, k, -self.kabs * sn


def _check_zero_mean(plan: MultiplierPlan, F: np.ndarray) -> None:
    scale = math.sqrt(plan.l2_sq(F) / plan.grid.volume)
    mean = abs(plan.mean(F))
    if mean > ZERO_MODE_RTOL * scale:
        raise ZeroModeError(
            f"zero-mode singularity: field mean {mean:.3e} is not zero "
            f"(rms {scale:.3e}); negative-order multipliers need zero-mean input"
        )


@functools.lru_cache(maxsize=16)
def plan_for(grid: Grid) -> MultiplierPlan:
    return MultiplierPlan(grid)


def fractional_derivative(f: np.ndarray, s: float, grid: Grid) -> np.ndarray:
    """``F⁻¹[|ξ|^s f̂]``; the zero mode maps to 0 for ``s > 0``."""
    plan = plan_for(grid)
    F = plan.forward(f)
    return plan.inverse(plan.power(s, F) * F)


def gradient(f: np.ndarray, grid: Grid) -> list[np.ndarray]:
    """Spectral gradient; Nyquist planes are dropped (real output)."""
    plan = plan_for(grid)
    F = plan.forward(f)
    return [plan.inverse(1j * x * F) for x in plan.xi_odd]


def energy_gradient(f: np.ndarray, grid: Grid) -> list[np.ndarray]:
    """Gradient components whose squares integrate to the spectral ``‖∇f‖²``.

    Equal to :func:`gradient` for fields without Nyquist content.
    """
    plan = plan_for(grid)
    F = plan.forward(f)
    return [plan.inverse(m * F) for m in plan.xi_energy]


def sobolev_norm(f: np.ndarray, s: float, grid: Grid) -> float:
    """Homogeneous ``Ḣ^s`` norm, ``‖ |ξ|^s f̂ ‖`` in the Riemann-sum convention."""
    plan = plan_for(grid)
    F = plan.forward(f)
    return math.sqrt(plan.l2_sq(plan.power(s, F) * F))


def linear_energy(u: np.ndarray, ut: np.ndarray, grid: Grid) -> float:
    """``½(‖∇u‖² + ‖u_t‖²)`` of a single wave component."""
    plan = plan_for(grid)
    U = plan.forward(u)
    return 0.5 * (plan.l2_sq(plan.kabs * U) + plan.l2_sq(plan.forward(ut)))


def rotate_spectral(plan: MultiplierPlan, t: float, U: np.ndarray, Ut: np.ndarray):
    """Exact free-wave flow of spectral data ``(û, û_t)`` over time ``t``."""
    c, k, m = plan.rotation(t)
    return c * U + k * Ut, m * U + c * Ut


def propagate_linear(state: State, dt: float) -> State:
    """Advance both components exactly under ``w_tt = Δw``.

    Per mode this is the rotation
    ``[[cos(|ξ|dt), sin(|ξ|dt)/|ξ|], [-|ξ|sin(|ξ|dt), cos(|ξ|dt)]]``; the zero
    mode evolves as ``u + dt·u_t``.
    """
    plan = plan_for(state.grid)
    out = []
    for w, wt in ((state.u, state.ut), (state.v, state.vt)):
        W, Wt = rotate_spectral(plan, dt, plan.forward(w), plan.forward(wt))
        out += [plan.inverse(W), plan.inverse(Wt)]
    return State(state.grid, *out, t=state.t + dt)


def duhamel_kernel_apply(f: np.ndarray, dt: float, grid: Grid) -> np.ndarray:
    """``K(dt) f = F⁻¹[sin(|ξ|dt)/|ξ| f̂]`` (``dt`` on the zero mode)."""
    plan = plan_for(grid)
    _, k, _ = plan.rotation(dt)
    return plan.inverse(k * plan.forward(f))


@dataclass
class DecayProbe:
    times: np.ndarray
    sups: np.ndarray
    exponent: float
    expected: float


def dispersive_decay_probe(psi: np.ndarray, grid: Grid, t_min: float = 1.0, t_max: float = 8.0,
                           n_times: int = 15) -> DecayProbe:
    """Fit ``sup_x |K(t)ψ| ~ t^p`` by least squares in log-log over ``[t_min, t_max]``.

    The zero mode of ``ψ`` grows linearly under ``K(t)`` on the torus (a
    periodic artefact), so it is removed before measuring.
    """
    if not 0 < t_min < t_max:
        raise ValueError("need 0 < t_min < t_max")
    plan = plan_for(grid)
    P = plan.forward(psi)
    P.flat[0] = 0.0
    times = np.geomspace(t_min, t_max, n_times)
    sups = np.empty(n_times)
    for i, t in enumerate(times):
        _, k, _ = plan.rotation(t)
        sups[i] = np.max(np.abs(plan.inverse(k * P)))
    slope = np.polyfit(np.log(times), np.log(sups), 1)[0]
    return DecayProbe(times, sups, float(slope), -(grid.d - 1) / 2)


# -- Littlewood-Paley -------------------------------------------------------


def _smooth_step(x: np.ndarray) -> np.ndarray:
    """C^∞ ramp: 0 for ``x <= -1``, 1 for ``x >= 0``."""
    y = np.clip(x + 1.0, 0.0, 1.0)

    def bump(z):
        out = np.zeros_like(z)
        pos = z > 0
        out[pos] = np.exp(-1.0 / z[pos])
        return out

    a = bump(y)
    b = bump(1.0 - y)
    return a / (a + b)


def lp_window(j: int, kabs: np.ndarray) -> np.ndarray:
    """Dyadic window ``φ̂_j``, supported in ``2^{j-1} < |ξ| < 2^{j+1}``."""
    with np.errstate(divide="ignore"):
        ell = np.log2(kabs)
    w = _smooth_step(ell - j) - _smooth_step(ell - j - 1)
    return np.where(kabs > 0, w, 0.0)


def band_range(grid: Grid) -> tuple[int, int]:
    """Indices ``(j_min, j_max)`` of the bands that touch resolved frequencies."""
    plan = plan_for(grid)
    kmin = 2 * np.pi / grid.L
    kmax = float(plan.kabs.max())
    return math.floor(math.log2(kmin)), math.ceil(math.log2(kmax))


@dataclass
class DyadicDecomposition:
    """Bands ``φ_j * w`` for ``j = j_min .. j_max``.

    ``truncated`` lists the dyadic indices that are dropped because their
    window sees no grid frequency (below the box scale or above Nyquist).
    """

    js: list[int]
    bands: list[np.ndarray]
    truncated: list[int]

    def reconstruct(self) -> np.ndarray:
        return sum(self.bands)

    def band(self, j: int) -> np.ndarray:
        return self.bands[self.js.index(j)]


def littlewood_paley(f: np.ndarray, grid: Grid) -> DyadicDecomposition:
    """Split ``f - mean(f)`` into smooth dyadic frequency bands."""
    plan = plan_for(grid)
    F = plan.forward(f)
    j_min, j_max = band_range(grid)
    js = list(range(j_min, j_max + 1))
    bands = [plan.inverse(lp_window(j, plan.kabs) * F) for j in js]
    truncated = [j_min - 1, j_max + 1]
    return DyadicDecomposition(js, bands, truncated)


def lp_norm(f: np.ndarray, p: float, grid: Grid) -> float:
    if math.isinf(p):
        return float(np.max(np.abs(f)))
    return float(np.sum(np.abs(f) ** p) * grid.cell_volume) ** (1.0 / p)


def besov_norm(f: np.ndarray, theta: float, l: float, m: float, grid: Grid) -> float:
    """Homogeneous Besov norm ``{Σ_j 2^{jmθ} ‖φ_j*f‖_l^m}^{1/m}``.

    ``l`` and ``m`` may be ``inf`` (max convention).
    """
    if not (l >= 1 and m >= 1):
        raise ValueError(f"need 1 <= l, m <= inf, got l={l}, m={m}")
    dec = littlewood_paley(f, grid)
    terms = np.array([2.0 ** (j * theta) * lp_norm(b, l, grid) for j, b in zip(dec.js, dec.bands)])
    if math.isinf(m):
        return float(terms.max(initial=0.0))
    return float(np.sum(terms**m) ** (1.0 / m))


# -- mollifier --------------------------------------------------------------

MOLLIFIER_POWER = 2


def mollifier_symbol(kabs: np.ndarray, j: int, d: int) -> np.ndarray:
    """Fourier transform of ``h_j(x) = j^d h_1(jx)``, ``h_1 ∝ (1-|x|²)²₊``.

    For ``h_1 = c(1-|x|²)^m₊`` with unit mass,
    ``ĥ_1(ξ) = Γ(ν+1) (2/|ξ|)^ν J_ν(|ξ|)`` with ``ν = d/2 + m``.
    """
    if j < 1:
        raise ValueError(f"mollifier index must be >= 1, got {j}")
    nu = d / 2 + MOLLIFIER_POWER
    z = kabs / j
    out = np.ones_like(z)
    nz = z > 1e-6
    zz = z[nz]
    out[nz] = special.gamma(nu + 1) * (2.0 / zz) ** nu * special.jv(nu, zz)
    # series for tiny |ξ|: 1 - z²/(4(ν+1))
    small = ~nz
    out[small] = 1.0 - z[small] ** 2 / (4 * (nu + 1))
    return out


def mollify(f: np.ndarray, j: int, grid: Grid) -> np.ndarray:
    """Convolution with the compactly supported kernel ``h_j`` (scale ``1/j``)."""
    plan = plan_for(grid)
    return plan.inverse(mollifier_symbol(plan.kabs, j, grid.d) * plan.forward(f))
