import numpy as np
import pytest

from solver.fields import CELL, XFACE, YFACE, GridField, VelocityField
from solver.grid import build_random_nonuniform, build_uniform


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run the slow refinement studies")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def uniform_grid():
    return build_uniform(8, 8)


@pytest.fixture
def nonuniform_grid():
    return build_random_nonuniform(8, 6, target_ratio=1.5, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


@pytest.fixture
def random_velocity(rng):
    """Random velocity with zero Dirichlet rows"""

    def make(grid):
        w = VelocityField(
            GridField(grid, XFACE, rng.standard_normal(XFACE.shape(grid))),
            GridField(grid, YFACE, rng.standard_normal(YFACE.shape(grid))),
        )
        return w.with_dirichlet()

    return make


@pytest.fixture
def random_pressure(rng):
    def make(grid):
        return GridField(grid, CELL, rng.standard_normal(CELL.shape(grid)))

    return make
