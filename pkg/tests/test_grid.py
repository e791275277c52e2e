import numpy as np
import pytest

from solver.errors import GridError
from solver.grid import Axis1D, build_random_nonuniform, build_uniform, regularity_ratio


def test_uniform_spacings():
    grid = build_uniform(4, 5, lengths=(2.0, 1.0))
    np.testing.assert_allclose(grid.x_axis.half_spacings, 0.5)
    np.testing.assert_allclose(grid.y_axis.half_spacings, 0.2)
    np.testing.assert_allclose(grid.x_axis.node_spacings, [0.25, 0.5, 0.5, 0.5, 0.25])
    assert grid.domain == (2.0, 1.0)
    assert regularity_ratio(build_uniform(6, 6)) == pytest.approx(1.0)


@pytest.mark.parametrize("n", [2, 5, 17])
@pytest.mark.parametrize("ratio", [1.5, 3.0])
def test_random_grid_meets_ratio(n, ratio):
    grid = build_random_nonuniform(n, n + 1, target_ratio=ratio, seed=n)
    for axis in (grid.x_axis, grid.y_axis):
        assert axis.spacing_ratio() >= ratio
        assert axis.nodes[0] == 0.0
        assert axis.nodes[-1] == 1.0
        assert np.all(axis.half_spacings > 0.0)


def test_random_grid_is_deterministic():
    a = build_random_nonuniform(10, 7, target_ratio=1.5, seed=42)
    b = build_random_nonuniform(10, 7, target_ratio=1.5, seed=42)
    c = build_random_nonuniform(10, 7, target_ratio=1.5, seed=43)
    assert a.same_as(b)
    assert not a.same_as(c)


def test_node_spacings_sum_to_length(nonuniform_grid):
    for axis in (nonuniform_grid.x_axis, nonuniform_grid.y_axis):
        assert axis.node_spacings.sum() == pytest.approx(axis.length, rel=1e-14)
        assert axis.half_spacings.sum() == pytest.approx(axis.length, rel=1e-14)


def test_cell_measures(nonuniform_grid):
    assert nonuniform_grid.cell_measures.shape == (8, 6)
    assert nonuniform_grid.cell_measures.sum() == pytest.approx(1.0, rel=1e-14)


def test_refined_keeps_nodes(nonuniform_grid):
    fine = nonuniform_grid.refined()
    assert (fine.nx, fine.ny) == (16, 12)
    np.testing.assert_array_equal(fine.x_axis.nodes[::2], nonuniform_grid.x_axis.nodes)
    assert fine.x_axis.spacing_ratio() == pytest.approx(nonuniform_grid.x_axis.spacing_ratio())


@pytest.mark.parametrize("counts", [(1, 4), (4, 0), (2.5, 4)])
def test_bad_counts(counts):
    with pytest.raises(GridError):
        build_uniform(*counts)


def test_bad_ratio_and_lengths():
    with pytest.raises(GridError):
        build_random_nonuniform(4, 4, target_ratio=0.5)
    with pytest.raises(GridError):
        build_uniform(4, 4, lengths=(1.0, -1.0))


def test_axis_validation():
    with pytest.raises(GridError):
        Axis1D(np.array([0.0, 0.5, 0.5, 1.0]))
    with pytest.raises(GridError):
        Axis1D(np.array([0.0]))
    with pytest.raises(GridError):
        Axis1D.from_spacings([0.5, -0.1])
