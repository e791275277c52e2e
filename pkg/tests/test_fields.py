import numpy as np
import pytest

from solver.errors import LatticeError
from solver.fields import (
    CELL,
    CORNER,
    XFACE,
    YFACE,
    D_x,
    D_y,
    GridField,
    VelocityField,
    Weighting,
    d_t,
    d_x,
    d_y,
    divergence,
    interp_x,
    interp_y,
    ip_l2M,
    ip_l2MT,
    ip_l2TM,
    mean_l2M,
    norm_linf,
    project_zero_mean,
)
from solver.grid import Axis1D, StaggeredGrid2D


def linear(a=1.3, b=-0.7, c=0.25):
    return lambda X, Y: a * X + b * Y + c


def test_lattice_shapes(nonuniform_grid):
    assert CELL.shape(nonuniform_grid) == (8, 6)
    assert XFACE.shape(nonuniform_grid) == (9, 6)
    assert YFACE.shape(nonuniform_grid) == (8, 7)
    assert CORNER.shape(nonuniform_grid) == (9, 7)


@pytest.mark.parametrize("lattice", [XFACE, CORNER])
def test_small_d_exact_on_linears(nonuniform_grid, lattice):
    f = GridField.sample(nonuniform_grid, lattice, linear())
    np.testing.assert_allclose(d_x(f).values, 1.3, atol=1e-12)


def test_small_d_y_exact_on_linears(nonuniform_grid):
    f = GridField.sample(nonuniform_grid, YFACE, linear())
    np.testing.assert_allclose(d_y(f).values, -0.7, atol=1e-12)


def test_small_d_of_square_on_first_cell():
    grid = StaggeredGrid2D(Axis1D([0.0, 0.3, 1.0]), Axis1D([0.0, 0.5, 1.0]))
    f = GridField.sample(grid, XFACE, lambda X, Y: X**2 + 0.0 * Y)
    np.testing.assert_allclose(d_x(f).values[0], 0.3, rtol=1e-14)
    np.testing.assert_allclose(d_x(f).values[1], 1.3, rtol=1e-14)


def test_big_d_exact_on_linears(nonuniform_grid):
    f = GridField.sample(nonuniform_grid, CELL, lambda X, Y: 2.0 * X + Y)
    # interior entries never see the wall value
    np.testing.assert_allclose(D_x(f).values[1:-1], 2.0, atol=1e-12)
    np.testing.assert_allclose(D_y(f).values[:, 1:-1], 1.0, atol=1e-12)


def test_big_d_wall_distance(nonuniform_grid):
    # f = 3x vanishes at x_0, so the first entry differences against wall 0 exactly
    f = GridField.sample(nonuniform_grid, CELL, lambda X, Y: 3.0 * X)
    np.testing.assert_allclose(D_x(f, wall=0.0).values[:-1], 3.0, atol=1e-12)
    constant = GridField.sample(nonuniform_grid, CELL, lambda X, Y: 0.0 * X + 5.0)
    np.testing.assert_allclose(D_y(constant, wall=5.0).values, 0.0, atol=1e-12)


def test_divergence_of_linear_solenoidal_field(nonuniform_grid):
    u = VelocityField(
        GridField.sample(nonuniform_grid, XFACE, lambda X, Y: 0.8 * X - 1.1 * Y + 0.3),
        GridField.sample(nonuniform_grid, YFACE, lambda X, Y: 2.0 * X - 0.8 * Y - 0.5),
    )
    np.testing.assert_allclose(divergence(u).values, 0.0, atol=1e-12)


def test_interpolation_exact_on_linears(nonuniform_grid):
    node = GridField.sample(nonuniform_grid, XFACE, linear())
    expected = GridField.sample(nonuniform_grid, CELL, linear())
    np.testing.assert_allclose(interp_x(node).values, expected.values, atol=1e-12)

    half = GridField.sample(nonuniform_grid, CELL, linear())
    expected = GridField.sample(nonuniform_grid, XFACE, linear())
    np.testing.assert_allclose(interp_x(half).values[1:-1], expected.values[1:-1], atol=1e-12)
    expected = GridField.sample(nonuniform_grid, YFACE, linear())
    np.testing.assert_allclose(interp_y(half).values[:, 1:-1], expected.values[:, 1:-1], atol=1e-12)


def test_weightings_agree_on_uniform_grid(uniform_grid, rng):
    f = GridField(uniform_grid, CELL, rng.standard_normal(CELL.shape(uniform_grid)))
    np.testing.assert_allclose(
        interp_x(f, Weighting.LINEAR).values, interp_x(f, Weighting.CONSERVATIVE).values, atol=1e-14
    )
    np.testing.assert_allclose(
        interp_y(f, Weighting.LINEAR).values, interp_y(f, Weighting.CONSERVATIVE).values, atol=1e-14
    )


def test_summation_by_parts(nonuniform_grid, random_velocity, random_pressure):
    u = random_velocity(nonuniform_grid)
    p = random_pressure(nonuniform_grid)
    assert ip_l2M(d_x(u.x), p) == pytest.approx(-ip_l2TM(u.x, D_x(p)), abs=1e-12)
    assert ip_l2M(d_y(u.y), p) == pytest.approx(-ip_l2MT(u.y, D_y(p)), abs=1e-12)


def test_conservative_interpolation_is_adjoint_of_average(nonuniform_grid, random_velocity, random_pressure):
    u = random_velocity(nonuniform_grid)
    c = random_pressure(nonuniform_grid)
    lhs = ip_l2TM(interp_x(c, Weighting.CONSERVATIVE), u.x)
    rhs = ip_l2M(c, interp_x(u.x))
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_d_t_matches_elementwise(nonuniform_grid, rng):
    old = GridField(nonuniform_grid, CELL, rng.standard_normal((8, 6)))
    new = GridField(nonuniform_grid, CELL, rng.standard_normal((8, 6)))
    result = d_t(new, old, 0.1)
    for i in range(8):
        for j in range(6):
            assert result.values[i, j] == pytest.approx((new.values[i, j] - old.values[i, j]) / 0.1)
    with pytest.raises(ValueError):
        d_t(new, old, 0.0)


def test_zero_mean_projection(nonuniform_grid, random_pressure):
    p = random_pressure(nonuniform_grid)
    assert mean_l2M(project_zero_mean(p)) == pytest.approx(0.0, abs=1e-14)


def test_linf_skips_dirichlet_rows(uniform_grid):
    values = np.zeros(XFACE.shape(uniform_grid))
    values[0, :] = 10.0
    values[3, 2] = -2.0
    assert norm_linf(GridField(uniform_grid, XFACE, values)) == 2.0


def test_lattice_errors(uniform_grid, nonuniform_grid):
    cell = GridField.zeros(uniform_grid, CELL)
    with pytest.raises(LatticeError):
        d_x(cell)
    with pytest.raises(LatticeError):
        D_x(GridField.zeros(uniform_grid, XFACE))
    with pytest.raises(LatticeError):
        cell + GridField.zeros(uniform_grid, XFACE)
    with pytest.raises(LatticeError):
        cell + GridField.zeros(nonuniform_grid, CELL)
    with pytest.raises(LatticeError):
        GridField(uniform_grid, CELL, np.zeros((3, 3)))
    with pytest.raises(LatticeError):
        VelocityField(GridField.zeros(uniform_grid, YFACE), GridField.zeros(uniform_grid, YFACE))


def test_velocity_sample_pins_dirichlet_rows(nonuniform_grid):
    w = VelocityField.sample(nonuniform_grid, lambda X, Y: 1.0 + X, lambda X, Y: 1.0 + Y)
    assert np.all(w.x.values[[0, -1], :] == 0.0)
    assert np.all(w.y.values[:, [0, -1]] == 0.0)
    assert w.max_abs() > 1.0
