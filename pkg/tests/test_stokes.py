from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from solver.diagnostics import kinetic_energy
from solver.errors import ConfigurationError, SolverError
from solver.fields import VelocityField, divergence, project_zero_mean, sample_cells
from solver.forcing import ForcingSpec, assemble_rhs, gradient_perturbation
from solver.grid import build_random_nonuniform, build_uniform
from solver.stokes import (
    DofMap,
    LinearSolverKind,
    SaddleSolver,
    Scheme,
    StepperConfig,
    StokesStepper,
    assemble,
    assemble_operator,
    run,
    solve_step,
    step_count,
)


def smooth_forcing():
    return ForcingSpec(
        lambda x, y, t: np.sin(np.pi * x) * np.cos(2 * np.pi * y) * (1 + t),
        lambda x, y, t: x * y * (1 - x) + t,
    )


def random_load(grid, rng):
    return assemble_rhs(ForcingSpec(lambda x, y, t: rng.standard_normal(np.broadcast(x, y).shape),
                                    lambda x, y, t: rng.standard_normal(np.broadcast(x, y).shape),
                                    mode="pointwise"), grid, 0.0)


def test_uniform_interior_diagonal():
    grid = build_uniform(4, 4)
    op = assemble_operator(grid, StepperConfig(mu=1.0, dt=1.0))
    ny = grid.ny
    # u^x unknown at node i = 2, half index j = 1: row (i - 1) * ny + j
    assert op.A[1 * ny + 1, 1 * ny + 1] == pytest.approx(0.0625 + 4.0, rel=1e-14)
    # next to the bottom wall the tangential stencil reaches the wall at distance k/2
    assert op.A[1 * ny + 0, 1 * ny + 0] == pytest.approx(0.0625 + 5.0, rel=1e-14)


def test_velocity_block_is_symmetric(nonuniform_grid):
    op = assemble_operator(nonuniform_grid, StepperConfig(mu=0.3, dt=0.1))
    assert abs(op.A - op.A.T).max() <= 1e-12
    assert op.matrix.shape == (op.dofs.size, op.dofs.size)


def test_divergence_block_is_minus_gradient_transpose(nonuniform_grid, random_velocity):
    op = assemble_operator(nonuniform_grid, StepperConfig(mu=1.0, dt=0.1))
    assert (op.B != -op.G.T).nnz == 0
    w = random_velocity(nonuniform_grid)
    weighted_div = nonuniform_grid.cell_measures.ravel() * divergence(w).values.ravel()
    np.testing.assert_allclose(op.B @ op.dofs.pack_velocity(w), weighted_div, atol=1e-13)


@pytest.mark.parametrize("counts", [(4, 4), (5, 3)])
def test_single_step_matches_dense_solve(counts, rng, random_velocity):
    grid = build_random_nonuniform(*counts, target_ratio=1.5, seed=5)
    config = StepperConfig(mu=0.7, dt=0.1)
    system = assemble(grid, config, random_velocity(grid), random_load(grid, rng))
    w, z, report = solve_step(system, config)

    dense = np.linalg.solve(system.operator.matrix.toarray(), system.rhs)
    ours = system.dofs.pack(w, z)
    scale = max(1.0, np.abs(dense).max())
    assert np.abs(ours[:-1] - dense[:-1]).max() <= 1e-12 * scale
    assert report.residual <= config.solver_tol


def test_dof_map_round_trip(nonuniform_grid, random_velocity, random_pressure):
    dofs = DofMap(nonuniform_grid)
    w = random_velocity(nonuniform_grid)
    z = random_pressure(nonuniform_grid)
    vector = dofs.pack(w, z, 2.5)
    assert vector.size == dofs.size
    np.testing.assert_array_equal(dofs.velocity(vector).x.values, w.x.values)
    np.testing.assert_array_equal(dofs.velocity(vector).y.values, w.y.values)
    np.testing.assert_array_equal(dofs.pressure(vector).values, z.values)
    assert vector[-1] == 2.5


def test_zero_data_gives_zero_solution(nonuniform_grid):
    config = StepperConfig(mu=1.0, dt=0.1)
    trajectory = run(nonuniform_grid, config, ForcingSpec.zero(), t_final=0.3)
    assert trajectory.n_steps == 3
    for w, z in zip(trajectory.velocities, trajectory.pressures):
        assert w.max_abs() == 0.0
        assert np.all(z.values == 0.0)


@pytest.mark.parametrize(
    "phi",
    [
        lambda x, y, t: x + 0.0 * y,
        lambda x, y, t: np.sin(4 * np.pi * x) ** 3 * np.sin(4 * np.pi * y) ** 3,
    ],
)
def test_gradient_forcing_only_moves_pressure(phi, rng, random_velocity):
    grid = build_random_nonuniform(10, 10, target_ratio=1.5, seed=1)
    config = StepperConfig(mu=1.0, dt=0.01)
    w_old = random_velocity(grid)
    load = assemble_rhs(smooth_forcing(), grid, 0.01)
    perturbed = load + gradient_perturbation(phi, grid, 0.01)

    w1, z1, _ = solve_step(assemble(grid, config, w_old, load), config)
    w2, z2, _ = solve_step(assemble(grid, config, w_old, perturbed), config)

    scale = max(1.0, w1.max_abs())
    assert (w2 - w1).max_abs() <= 1e-9 * scale
    shift = project_zero_mean(sample_cells(grid, phi, 0.01))
    np.testing.assert_allclose(z2.values - z1.values, shift.values, atol=1e-8)


@pytest.mark.parametrize(
    "phi, phi_x, phi_y",
    [
        (lambda x, y, t: x + 0.0 * y, lambda x, y, t: 1.0 + 0.0 * x * y, lambda x, y, t: 0.0 * x * y),
        (
            lambda x, y, t: np.sin(4 * np.pi * x) ** 3 * np.sin(4 * np.pi * y) ** 3,
            lambda x, y, t: 12 * np.pi * np.sin(4 * np.pi * x) ** 2 * np.cos(4 * np.pi * x) * np.sin(4 * np.pi * y) ** 3,
            lambda x, y, t: 12 * np.pi * np.sin(4 * np.pi * x) ** 3 * np.sin(4 * np.pi * y) ** 2 * np.cos(4 * np.pi * y),
        ),
    ],
)
def test_gradient_forcing_leaves_every_velocity_level(phi, phi_x, phi_y, random_velocity):
    grid = build_random_nonuniform(10, 10, target_ratio=1.5, seed=1)
    config = StepperConfig(mu=1.0, dt=0.05)
    base = replace(smooth_forcing(), quadrature_order=12)
    initial = random_velocity(grid)
    plain = run(grid, config, base, 0.2, initial=initial)
    shifted = run(grid, config, base.plus(phi_x, phi_y), 0.2, initial=initial)

    offset = project_zero_mean(sample_cells(grid, phi, 0.0))
    for w1, w2, z1, z2 in zip(plain.velocities[1:], shifted.velocities[1:], plain.pressures[1:], shifted.pressures[1:]):
        scale = max(1.0, w1.max_abs() / grid.h_min)
        assert (w2 - w1).max_abs() <= 10 * config.solver_tol * scale
        p_scale = max(1.0, np.abs(z2.values).max() / grid.h_min)
        assert np.abs(z2.values - z1.values - offset.values).max() <= 10 * config.solver_tol * p_scale


def test_solution_is_discretely_solenoidal(nonuniform_grid):
    trajectory = run(nonuniform_grid, StepperConfig(mu=1.0, dt=0.05), smooth_forcing(), t_final=0.2)
    for w in trajectory.velocities[1:]:
        assert np.abs(divergence(w).values).max() <= 1e-10


@pytest.mark.parametrize("dt", [0.1, 1.0])
def test_unforced_energy_decays(dt, nonuniform_grid, random_velocity):
    config = StepperConfig(mu=1.0, dt=dt)
    trajectory = run(nonuniform_grid, config, ForcingSpec.zero(), t_final=3 * dt, initial=random_velocity(nonuniform_grid))
    energies = [kinetic_energy(w) for w in trajectory.velocities]
    assert all(b < a for a, b in zip(energies, energies[1:]))


def test_factorization_is_reused(nonuniform_grid, random_velocity):
    initial = random_velocity(nonuniform_grid)
    forcing = smooth_forcing()
    reused = StokesStepper(nonuniform_grid, StepperConfig(mu=1.0, dt=0.1), forcing)
    fresh = StokesStepper(nonuniform_grid, StepperConfig(mu=1.0, dt=0.1, reuse_factorization=False), forcing)
    a = reused.run(0.4, initial=initial)
    b = fresh.run(0.4, initial=initial)

    assert reused.solver.factorizations == 1
    assert fresh.solver.factorizations == 4
    assert [r.factorized for r in a.reports] == [True, False, False, False]
    for wa, wb, za, zb in zip(a.velocities, b.velocities, a.pressures, b.pressures):
        np.testing.assert_array_equal(wa.x.values, wb.x.values)
        np.testing.assert_array_equal(wa.y.values, wb.y.values)
        np.testing.assert_array_equal(za.values, zb.values)


def test_minres_agrees_with_direct(random_velocity):
    grid = build_uniform(6, 6)
    initial = random_velocity(grid)
    direct = run(grid, StepperConfig(mu=1.0, dt=0.1), smooth_forcing(), 0.2, initial=initial)
    minres_config = StepperConfig(mu=1.0, dt=0.1, linear_solver=LinearSolverKind.MINRES, solver_tol=1e-8)
    iterative = run(grid, minres_config, smooth_forcing(), 0.2, initial=initial)

    assert all(r.residual <= 1e-8 for r in iterative.reports)
    assert all(r.linear_iterations > 0 for r in iterative.reports)
    scale = direct.velocities[-1].max_abs()
    assert (iterative.velocities[-1] - direct.velocities[-1]).max_abs() <= 1e-4 * scale


def test_store_false_keeps_endpoints(nonuniform_grid):
    trajectory = run(nonuniform_grid, StepperConfig(mu=1.0, dt=0.1), smooth_forcing(), 0.5, store=False)
    assert trajectory.steps == [0, 5]
    assert len(trajectory.reports) == 5
    assert not trajectory.complete


def test_observer_sees_every_step(nonuniform_grid):
    seen = []
    run(nonuniform_grid, StepperConfig(mu=1.0, dt=0.1), smooth_forcing(), 0.3,
        observer=lambda n, w, z: seen.append(n), store=False)
    assert seen == [1, 2, 3]


def test_mac_scheme_uses_point_forcing(nonuniform_grid):
    stepper = StokesStepper(nonuniform_grid, StepperConfig(mu=1.0, dt=0.1, scheme=Scheme.MAC), smooth_forcing())
    assert stepper.forcing.mode.value == "pointwise"


def test_config_validation():
    with pytest.raises(ConfigurationError):
        StepperConfig(mu=0.0, dt=0.1)
    with pytest.raises(ConfigurationError):
        StepperConfig(mu=1.0, dt=-0.1)
    with pytest.raises(ConfigurationError):
        StepperConfig(mu=1.0, dt=0.1, solver_tol=1e-16)
    with pytest.raises(ConfigurationError):
        step_count(1.0, 0.3)
    assert step_count(1.0, 0.1) == 10


def test_initial_velocity_is_kept_at_level_zero(nonuniform_grid, random_velocity):
    initial = random_velocity(nonuniform_grid)
    trajectory = run(nonuniform_grid, StepperConfig(mu=1.0, dt=0.1), ForcingSpec.zero(), 0.1, initial=initial)
    np.testing.assert_array_equal(trajectory.velocities[0].x.values, initial.x.values)
    assert isinstance(trajectory.velocities[-1], VelocityField)


def test_solver_counts_one_factorization_for_many_solves(nonuniform_grid, rng):
    config = StepperConfig(mu=1.0, dt=0.1)
    op = assemble_operator(nonuniform_grid, config)
    solver = SaddleSolver(op, config)
    for _ in range(3):
        solver.solve(rng.standard_normal(op.dofs.size))
    assert solver.factorizations == 1
    assert isinstance(op.matrix, sp.csc_matrix)


@pytest.mark.parametrize("kind, part", [(LinearSolverKind.MINRES, "velocity block"), (LinearSolverKind.DIRECT, "saddle matrix")])
def test_factorization_failure_is_a_solver_error(kind, part, nonuniform_grid, random_velocity, monkeypatch):
    def singular(matrix):
        raise RuntimeError("Factor is exactly singular")

    monkeypatch.setattr(spla, "splu", singular)
    config = StepperConfig(mu=1.0, dt=0.1, linear_solver=kind)
    with pytest.raises(SolverError, match=part) as info:
        run(nonuniform_grid, config, smooth_forcing(), 0.1, initial=random_velocity(nonuniform_grid))
    assert info.value.step == 1
