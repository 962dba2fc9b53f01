"""Power-type couplings ``f₁, f₂`` and the potential ``F = λμ|u|^{α+2}|v|^{β+2}``.

With sign ``σ`` the system is ``u_tt - Δu = f₁``, ``v_tt - Δv = f₂`` where

    f₁ = σλ|u|^α |v|^{β+2} u,      f₂ = σμ|u|^{α+2} |v|^β v,

so that ``A·f₁ = σ ∂F/∂u`` and ``B·f₂ = σ ∂F/∂v`` with ``A = μ(α+2)`` and
``B = λ(β+2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import CouplingParams, Grid


def _abs_pow(x: np.ndarray, p: float) -> np.ndarray:
    # numpy gives 0**0 == 1, which is the right limit for |u|^0
    if p == 0:
        return np.ones_like(x)
    if p == 1:
        return np.abs(x)
    if p == 2:
        return x * x
    if float(p).is_integer() and p <= 8:
        k = int(p)
        base = x * x if k % 2 == 0 else np.abs(x)
        out = base
        for _ in range(k // 2 - 1 if k % 2 == 0 else k - 1):
            out = out * base
        return out
    return np.abs(x) ** p


def eval_f1(u: np.ndarray, v: np.ndarray, p: CouplingParams) -> np.ndarray:
    """``σλ|u|^α|v|^{β+2}u`` pointwise."""
    return (p.sigma * p.lam) * _abs_pow(u, p.alpha) * _abs_pow(v, p.beta + 2) * u


def eval_f2(u: np.ndarray, v: np.ndarray, p: CouplingParams) -> np.ndarray:
    """``σμ|u|^{α+2}|v|^β v``; identical arithmetic to ``eval_f1`` with roles swapped."""
    return eval_f1(v, u, p.swapped())


def potential_density(u: np.ndarray, v: np.ndarray, p: CouplingParams) -> np.ndarray:
    """``λμ|u|^{α+2}|v|^{β+2}`` pointwise (no σ)."""
    return (p.lam * p.mu) * _abs_pow(u, p.alpha + 2) * _abs_pow(v, p.beta + 2)


def eval_potential(u: np.ndarray, v: np.ndarray, p: CouplingParams, grid: Grid) -> float:
    """Riemann-sum integral of ``λμ|u|^{α+2}|v|^{β+2}``."""
    return grid.integrate(potential_density(u, v, p))


@dataclass
class NonlinearEval:
    f1: np.ndarray
    f2: np.ndarray
    potential_density: np.ndarray


def evaluate(u: np.ndarray, v: np.ndarray, p: CouplingParams) -> NonlinearEval:
    return NonlinearEval(eval_f1(u, v, p), eval_f2(u, v, p), potential_density(u, v, p))


@dataclass
class GradientReport:
    max_rel_error_u: float
    max_rel_error_v: float
    trials: int
    excluded_points: int
    fd_step: float
    errors: list[float] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max(self.max_rel_error_u, self.max_rel_error_v)


def random_smooth_fields(grid: Grid, rng: np.random.Generator, modes: int = 3):
    """A pair of random smooth periodic fields built from a few low Fourier modes."""
    coords = grid.coords()
    out = []
    for _ in range(2):
        f = rng.normal() * np.ones(grid.shape)
        for _ in range(modes):
            k = rng.integers(-2, 3, size=grid.d)
            phase = sum(2 * np.pi * ki * x / grid.L for ki, x in zip(k, coords))
            f = f + rng.normal() * np.cos(phase + rng.uniform(0, 2 * np.pi))
        out.append(f)
    return out[0], out[1]


def verify_gradient_structure(
    p: CouplingParams,
    trials: int = 20,
    fd_step: float = 1e-5,
    grid: Grid | None = None,
    seed: int = 0,
) -> GradientReport:
    """Check ``∂F/∂u = A f₁/σ`` and ``∂F/∂v = B f₂/σ`` by central differences.

    ``F`` is local, so perturbing every grid value of ``u`` by ``±ε`` at once
    and differencing the density pointwise is the same as differencing the
    integral one point at a time (divided by the cell volume).  Points with
    ``|u|`` or ``|v|`` below ``10·ε`` are excluded and counted.
    """
    if fd_step <= 0:
        raise ValueError("fd_step must be positive")
    grid = grid or Grid(2, 16, 2 * np.pi)
    rng = np.random.default_rng(seed)
    A, B = p.A, p.B
    err_u = err_v = 0.0
    excluded = 0
    errors = []
    for _ in range(trials):
        u, v = random_smooth_fields(grid, rng)
        keep = (np.abs(u) >= 10 * fd_step) & (np.abs(v) >= 10 * fd_step)
        excluded += int(keep.size - keep.sum())
        du = (potential_density(u + fd_step, v, p) - potential_density(u - fd_step, v, p)) / (2 * fd_step)
        dv = (potential_density(u, v + fd_step, p) - potential_density(u, v - fd_step, p)) / (2 * fd_step)
        au = A * eval_f1(u, v, p) / p.sigma
        av = B * eval_f2(u, v, p) / p.sigma
        eu = _rel_err(du[keep], au[keep])
        ev = _rel_err(dv[keep], av[keep])
        errors.append(max(eu, ev))
        err_u, err_v = max(err_u, eu), max(err_v, ev)
    return GradientReport(err_u, err_v, trials, excluded, fd_step, errors)


def _rel_err(approx: np.ndarray, exact: np.ndarray) -> float:
    if approx.size == 0:
        return 0.0
    scale = np.max(np.abs(exact))
    if scale == 0:
        return float(np.max(np.abs(approx)))
    return float(np.max(np.abs(approx - exact)) / scale)
