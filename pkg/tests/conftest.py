import numpy as np
import pytest

from blockcode.runtime import SystemConfig
from blockcode.straggler import ShiftedExponential


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def example_config():
    return SystemConfig(4, 4, 4, 1, ShiftedExponential(1.0))


@pytest.fixture
def small_config():
    return SystemConfig(3, 6, 3, 1, ShiftedExponential(1.0, 0.1))


def random_simplex_point(rng, N, L):
    x = rng.dirichlet(np.ones(N)) * L
    return x * (L / x.sum())
