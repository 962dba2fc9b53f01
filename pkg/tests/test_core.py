import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradwave import spectral
from gradwave.core import (
    ConeSpec, CouplingParams, Grid, GridError, State, StateError, bump, gaussian, gaussian_radius,
    make_state, weights,
)

from conftest import random_state


class TestGrid:
    @pytest.mark.parametrize("d", [2, 3, 4])
    def test_spacing_identity(self, d):
        for n in (8, 16, 32):
            g = Grid(d, n, 7.3)
            assert g.h * g.n == g.L
            assert g.shape == (n,) * d

    @pytest.mark.parametrize("d,n,L", [(1, 8, 1.0), (5, 8, 1.0), (2, 12, 1.0), (2, 4, 1.0), (2, 8, 0.0), (2, 8, -1.0)])
    def test_rejects_invalid(self, d, n, L):
        with pytest.raises(GridError):
            Grid(d, n, L)

    def test_memory_budget(self):
        with pytest.raises(GridError, match="budget"):
            Grid(4, 128, 1.0)
        Grid(3, 64, 1.0, max_points=64**3)

    def test_relaxed_sizes_need_opt_in(self):
        with pytest.raises(GridError):
            Grid(3, 48, 8.0)
        assert Grid(3, 48, 8.0, pow2=False).h == 8.0 / 48
        with pytest.raises(GridError):
            Grid(3, 14, 8.0, pow2=False)  # prime factor 7

    def test_axis_and_integration(self):
        g = Grid(2, 16, 4.0)
        assert g.axis()[0] == -2.0 and np.isclose(g.axis()[-1], 2.0 - g.h)
        assert math.isclose(g.integrate(np.ones(g.shape)), g.volume)

    def test_horizon(self):
        g = Grid(3, 64, 32.0)
        assert g.horizon(5.0) == 16.0 - 1.0 - 5.0


class TestWeights:
    @pytest.mark.parametrize("params,expected", [
        ((1, 1, 0, 0), (2, 2)), ((1, 1, 0, 2), (2, 4)), ((2, 3, 1, 2), (9, 8)),
    ])
    def test_examples(self, params, expected):
        assert weights(CouplingParams(*params)) == expected

    def test_derived_not_stale(self):
        p = CouplingParams(1, 1, 0, 2).replace(mu=5.0)
        assert p.A == 10.0

    def test_invalid(self):
        with pytest.raises(ValueError):
            CouplingParams(alpha=-1)
        with pytest.raises(ValueError):
            CouplingParams(sigma=0)

    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 4), st.floats(0, 4))
    def test_swap_involution(self, lam, mu, a, b):
        p = CouplingParams(lam, mu, a, b)
        assert p.swapped().swapped() == p
        assert p.swapped().A == p.B and p.swapped().B == p.A


class TestMakeState:
    def test_zero_profiles(self):
        s = make_state(Grid(2, 8, 1.0))
        assert all(not f.any() for f in s.fields()) and s.t == 0.0

    def test_single_mode(self):
        g = Grid(2, 16, 3.0)
        s = make_state(g, u=lambda x, y: np.sin(2 * np.pi * x / g.L))
        assert not s.ut.any() and not s.v.any() and not s.vt.any()
        F = spectral.plan_for(g).forward(s.u)
        # ±k along the full (non-rfft) axis: one conjugate pair
        assert np.count_nonzero(np.abs(F) > 1e-10 * np.abs(F).max()) == 2

    @pytest.mark.parametrize("d", [2, 3])
    def test_gaussian_sampling_bound(self, d):
        g = Grid(d, 16, 5.0)
        a, w = 2.0, 0.7
        s = make_state(g, u=gaussian(a, w))
        bound = a * (1 - math.exp(-(g.h / 2) ** 2 * d / w**2))
        assert a - s.u.max() <= bound + 1e-15

    def test_non_finite_names_field(self):
        g = Grid(2, 8, 1.0)
        with pytest.raises(StateError, match="vt"):
            make_state(g, vt=lambda x, y: np.full(np.broadcast(x, y).shape, np.nan))

    def test_bump_support(self):
        g = Grid(2, 32, 8.0)
        s = make_state(g, u=bump(1.0, 2.0, (1.0, 0.0)))
        r = g.radius((1.0, 0.0))
        assert not s.u[r >= 2.0].any() and s.u[r < 1.9].min() > 0

    def test_gaussian_radius(self):
        r = gaussian_radius(1.5, 1e-8)
        assert math.isclose(math.exp(-(r / 1.5) ** 2), 1e-8)


class TestState:
    def test_rejects_mismatched_shapes(self):
        g = Grid(2, 8, 1.0)
        with pytest.raises(StateError):
            State(g, g.zeros(), g.zeros(), np.zeros((4, 4)), g.zeros())

    def test_swap(self, rng):
        s = random_state(Grid(2, 8, 1.0), rng)
        w = s.swapped()
        assert w.u is s.v and w.vt is s.ut
        assert all(np.array_equal(a, b) for a, b in zip(w.swapped().fields(), s.fields()))

    def test_velocity_is_time_derivative(self):
        g = Grid(2, 32, 2 * np.pi)
        s = make_state(g, u=lambda x, y: np.cos(2 * x + y), ut=lambda x, y: np.sin(x - y))
        errs = []
        for eps in (1e-2, 5e-3):
            fd = (spectral.propagate_linear(s, eps).u - spectral.propagate_linear(s, -eps).u) / (2 * eps)
            errs.append(np.max(np.abs(fd - s.ut)))
        assert 3.5 < errs[0] / errs[1] < 4.5  # O(eps^2)

    def test_sup_norms(self):
        g = Grid(2, 8, 1.0)
        s = State(g, g.zeros() - 3, g.zeros(), g.zeros() + 1, g.zeros())
        assert s.sup_norms() == {"u": 3.0, "ut": 0.0, "v": 1.0, "vt": 0.0}


class TestConeSpec:
    def test_ordering(self):
        with pytest.raises(ValueError):
            ConeSpec((0.0, 0.0), 1.0, 0.5, 0.2)
        with pytest.raises(ValueError):
            ConeSpec((0.0, 0.0), 1.0, 0.0, 2.0)

    def test_fits_with_margin(self):
        g = Grid(2, 16, 8.0)  # h = 0.5, half box 4
        ConeSpec((0.0, 0.0), 3.0, 0.0, 1.0).check_fits(g)
        with pytest.raises(ValueError, match="margin"):
            ConeSpec((0.0, 0.0), 3.5, 0.0, 1.0).check_fits(g)
        with pytest.raises(ValueError):
            ConeSpec((0.0, 0.0, 0.0), 1.0, 0.0, 1.0).check_fits(g)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from([2, 3, 4]), st.sampled_from([8, 16]), st.integers(0, 2**32 - 1))
def test_spectral_round_trip(d, n, seed):
    g = Grid(d, n, 3.0)
    f = np.random.default_rng(seed).normal(size=g.shape)
    plan = spectral.plan_for(g)
    back = plan.inverse(plan.forward(f))
    assert np.max(np.abs(back - f)) <= 1e-12 * np.max(np.abs(f))
