import numpy as np
import pytest

from gradwave.core import CouplingParams, Grid, State


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def defocusing():
    return CouplingParams(1.0, 1.0, 0.0, 2.0, -1)


def random_state(grid: Grid, rng, t: float = 0.0) -> State:
    return State(grid, *(rng.normal(size=grid.shape) for _ in range(4)), t=t)


def max_diff(a: State, b: State) -> float:
    return max(float(np.max(np.abs(x - y))) for x, y in zip(a.fields(), b.fields()))
