import numpy as np
import pytest

from critnls.analysis.criteria import thresholds_from_ground_state
from critnls.config import GroundStateConfig
from critnls.discretization.radial_grid import RadialGrid
from critnls.solvers.ground_state import solve_ground_state


@pytest.fixture(scope="session")
def grid():
    """The default production resolution."""
    return RadialGrid(r_max=100.0, n=4096)


@pytest.fixture(scope="session")
def small_grid():
    return RadialGrid(r_max=30.0, n=600)


@pytest.fixture(scope="session")
def ground_state(grid):
    return solve_ground_state(GroundStateConfig(), grid)


@pytest.fixture(scope="session")
def thresholds(ground_state):
    return thresholds_from_ground_state(ground_state)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
