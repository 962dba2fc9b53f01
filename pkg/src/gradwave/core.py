"""Shared domain types: grids, states, coupling parameters and cone geometry.

Fields are plain real ``numpy`` arrays of shape ``(n,) * d`` in row-major
order.  A :class:`State` bundles the four fields ``(u, ut, v, vt)`` together
with the :class:`Grid` they live on and the time.

The periodic box ``[-L/2, L/2)^d`` stands in for ``R^d``.  Waves travel at
unit speed, so data supported in a ball of radius ``r`` do not feel the
periodic images before ``t = L/2 - r``; callers check this horizon with
:meth:`Grid.horizon`.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

#: Upper bound on ``n**d`` accepted by :class:`Grid` (about 1 GiB per state).
MAX_POINTS = 2**25

FIELD_NAMES = ("u", "ut", "v", "vt")


def _is_5smooth(n: int) -> bool:
    for q in (2, 3, 5):
        while n % q == 0:
            n //= q
    return n == 1


class GridError(ValueError):
    pass


class StateError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[-L/2, L/2)^d``."""

    d: int
    n: int
    L: float
    max_points: int = field(default=MAX_POINTS, compare=False, repr=False)
    # opt-out for even 5-smooth sizes such as 48 or 96 (used by convergence studies)
    pow2: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        if self.d not in (2, 3, 4):
            raise GridError(f"dimension must be 2, 3 or 4, got {self.d}")
        if self.pow2 and (self.n < 8 or self.n & (self.n - 1)):
            raise GridError(f"n must be a power of two >= 8, got {self.n}")
        if not self.pow2 and (self.n < 8 or self.n % 2 or not _is_5smooth(self.n)):
            raise GridError(f"n must be even, >= 8 and have no prime factor above 5, got {self.n}")
        if not (self.L > 0 and math.isfinite(self.L)):
            raise GridError(f"box length must be positive, got {self.L}")
        if self.n**self.d > self.max_points:
            raise GridError(
                f"grid has {self.n**self.d} points, budget is {self.max_points}"
            )
        object.__setattr__(self, "L", float(self.L))

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @property
    def volume(self) -> float:
        return self.L**self.d

    def axis(self) -> np.ndarray:
        return -self.L / 2 + self.h * np.arange(self.n)

    def coords(self) -> list[np.ndarray]:
        """Sparse coordinate arrays, broadcastable to :attr:`shape`."""
        return np.meshgrid(*([self.axis()] * self.d), indexing="ij", sparse=True)

    def radius(self, center: Optional[Sequence[float]] = None) -> np.ndarray:
        """Distance of every grid point from ``center`` (no periodic wrapping)."""
        center = np.zeros(self.d) if center is None else np.asarray(center, float)
        r2 = 0.0
        for x, c in zip(self.coords(), center):
            r2 = r2 + (x - c) ** 2
        return np.sqrt(r2)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def integrate(self, f: np.ndarray) -> float:
        """Riemann-sum integral over the box."""
        return float(np.sum(f)) * self.cell_volume

    def horizon(self, data_radius: float) -> float:
        """Latest time at which data of the given radius still emulate ``R^d``."""
        return self.L / 2 - 2 * self.h - data_radius


@dataclass(frozen=True)
class CouplingParams:
    """Coefficients of ``u_tt - Δu = σλ|u|^α|v|^{β+2}u`` and its partner.

    ``sigma = -1`` with ``lam, mu > 0`` is the defocusing configuration
    (coercive energy).
    """

    lam: float = 1.0
    mu: float = 1.0
    alpha: float = 0.0
    beta: float = 2.0
    sigma: int = -1

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError(f"exponents must be >= 0, got {self.alpha}, {self.beta}")
        if self.sigma not in (1, -1):
            raise ValueError(f"sigma must be +1 or -1, got {self.sigma}")

    @property
    def A(self) -> float:
        return self.mu * (self.alpha + 2)

    @property
    def B(self) -> float:
        return self.lam * (self.beta + 2)

    def swapped(self) -> "CouplingParams":
        return CouplingParams(self.mu, self.lam, self.beta, self.alpha, self.sigma)

    def replace(self, **changes) -> "CouplingParams":
        return dataclasses.replace(self, **changes)


def weights(params: CouplingParams) -> tuple[float, float]:
    """Energy weights ``(A, B) = (μ(α+2), λ(β+2))``."""
    return params.A, params.B


@dataclass
class State:
    """The fields ``(u, u_t, v, v_t)`` at time ``t``."""

    grid: Grid
    u: np.ndarray
    ut: np.ndarray
    v: np.ndarray
    vt: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        for name in FIELD_NAMES:
            arr = getattr(self, name)
            if np.shape(arr) != self.grid.shape:
                raise StateError(
                    f"field {name} has shape {np.shape(arr)}, grid is {self.grid.shape}"
                )

    @classmethod
    def zeros(cls, grid: Grid, t: float = 0.0) -> "State":
        return cls(grid, *(grid.zeros() for _ in FIELD_NAMES), t=t)

    def fields(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return self.u, self.ut, self.v, self.vt

    def copy(self) -> "State":
        return State(self.grid, *(f.copy() for f in self.fields()), t=self.t)

    def swapped(self) -> "State":
        return State(self.grid, self.v, self.vt, self.u, self.ut, t=self.t)

    def is_finite(self) -> bool:
        return all(np.isfinite(f).all() for f in self.fields())

    def sup_norms(self) -> dict[str, float]:
        return {name: float(np.max(np.abs(f))) for name, f in zip(FIELD_NAMES, self.fields())}


Profile = Callable[..., np.ndarray]


def make_state(
    grid: Grid,
    u: Optional[Profile] = None,
    ut: Optional[Profile] = None,
    v: Optional[Profile] = None,
    vt: Optional[Profile] = None,
    t: float = 0.0,
) -> State:
    """Sample closed-form profiles ``f(*coords)`` at the grid points.

    Missing profiles are zero.
    """
    coords = grid.coords()
    sampled = []
    for name, prof in zip(FIELD_NAMES, (u, ut, v, vt)):
        if prof is None:
            sampled.append(grid.zeros())
            continue
        values = np.broadcast_to(np.asarray(prof(*coords), dtype=float), grid.shape).copy()
        if not np.isfinite(values).all():
            raise StateError(f"profile for field {name} is not finite on the grid")
        sampled.append(values)
    return State(grid, *sampled, t=t)


def gaussian(amplitude: float, width: float, center: Optional[Sequence[float]] = None) -> Profile:
    """``a·exp(-|x - c|²/w²)`` as a profile."""

    def prof(*xs):
        c = np.zeros(len(xs)) if center is None else center
        r2 = sum((x - ci) ** 2 for x, ci in zip(xs, c))
        return amplitude * np.exp(-r2 / width**2)

    return prof


def bump(amplitude: float, radius: float, center: Optional[Sequence[float]] = None) -> Profile:
    """Compactly supported ``a·exp(1 - 1/(1 - |x-c|²/R²))`` (zero for ``|x-c| >= R``)."""

    def prof(*xs):
        c = np.zeros(len(xs)) if center is None else center
        q = sum((x - ci) ** 2 for x, ci in zip(xs, c)) / radius**2
        out = np.zeros(np.broadcast(*xs).shape)
        inside = q < 1
        out[inside] = amplitude * np.exp(1 - 1 / (1 - q[inside]))
        return out

    return prof


def gaussian_radius(width: float, rel_tol: float = 1e-12) -> float:
    """Radius beyond which a Gaussian of the given width is below ``rel_tol``."""
    return width * math.sqrt(-math.log(rel_tol))


@dataclass(frozen=True)
class ConeSpec:
    """Backward light cone with vertex ``(x0, t0)``, sectioned at ``S <= T``.

    The section at time ``t`` is the ball ``|x - x0| <= t0 - t``.
    """

    x0: tuple[float, ...]
    t0: float
    S: float
    T: float

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(c) for c in self.x0))
        if not self.S <= self.T <= self.t0:
            raise ValueError(f"need S <= T <= t0, got S={self.S}, T={self.T}, t0={self.t0}")

    def radius(self, t: float) -> float:
        return self.t0 - t

    def check_fits(self, grid: Grid, t: Optional[float] = None) -> None:
        """Raise if a section (at ``t``, default the widest at ``S``) leaves the box."""
        if len(self.x0) != grid.d:
            raise ValueError(f"cone vertex has {len(self.x0)} coordinates, grid is {grid.d}-d")
        r = self.radius(self.S if t is None else t)
        margin = 2 * grid.h
        for c in self.x0:
            if c - r - margin < -grid.L / 2 or c + r + margin > grid.L / 2:
                raise ValueError(
                    f"cone section of radius {r:g} around {self.x0} does not fit "
                    f"in the box [-{grid.L / 2:g}, {grid.L / 2:g}) with margin 2h={margin:g}"
                )
