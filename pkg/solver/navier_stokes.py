"""
Fully implicit RMAC Navier-Stokes step.

The skew-symmetric convective term is lagged at the previous Picard iterate,
so every outer iteration is one Stokes saddle solve with the factorization
of the Stokes operator.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from solver.errors import ConfigurationError, NonconvergenceError
from solver.fields import (
    XFACE,
    YFACE,
    D_x,
    D_y,
    GridField,
    VelocityField,
    Weighting,
    d_x,
    d_y,
    interp_x,
    interp_y,
    norm_vel_l2,
)
from solver.forcing import ForcingSpec
from solver.grid import StaggeredGrid2D
from solver.stokes import StepperConfig, StepReport, StokesStepper, Trajectory, assemble, solve_step

logger = logging.getLogger(__name__)

CONS = Weighting.CONSERVATIVE


@dataclass(frozen=True)
class NonlinearConfig:
    picard_tol: float = 1e-10
    max_iters: int = 50
    relaxation: float = 1.0
    convection: bool = True

    def __post_init__(self):
        if not self.picard_tol > 0.0:
            raise ConfigurationError(f"picard_tol must be positive, got {self.picard_tol}")
        if int(self.max_iters) < 1:
            raise ConfigurationError(f"max_iters must be >= 1, got {self.max_iters}")
        if not 0.0 < self.relaxation <= 1.0:
            raise ConfigurationError(f"relaxation must lie in (0, 1], got {self.relaxation}")


def nonlinear_term(w: VelocityField, grid: Optional[StaggeredGrid2D] = None) -> VelocityField:
    """
    Skew-symmetric convection (alpha^x, alpha^y) on the velocity lattices.

    alpha^x = 1/2 [ W^x D_x(P^x W^x) + P^x d_x((W^x)^2)
                    + P^y(P^x W^y D_y W^x) + d_y(P^y W^x P^x W^y) ]

    and the mirrored alpha^y. Half-to-integer interpolations use the
    conservative weighting. Values on the Dirichlet rows are zero.
    """
    if grid is not None and not w.grid.same_as(grid):
        raise ConfigurationError("Velocity does not live on the given grid")
    wx, wy = w.x, w.y
    wx_corner = interp_y(wx, CONS)
    wy_corner = interp_x(wy, CONS)
    flux = wx_corner * wy_corner

    ax = (
        wx * D_x(interp_x(wx))
        + interp_x(d_x(wx * wx), CONS)
        + interp_y(wy_corner * D_y(wx))
        + d_y(flux)
    ).values * 0.5
    ay = (
        wy * D_y(interp_y(wy))
        + interp_y(d_y(wy * wy), CONS)
        + interp_x(wx_corner * D_x(wy))
        + d_x(flux)
    ).values * 0.5
    ax[0, :] = ax[-1, :] = 0.0
    ay[:, 0] = ay[:, -1] = 0.0
    return VelocityField(GridField(w.grid, XFACE, ax), GridField(w.grid, YFACE, ay))


class NavierStokesStepper(StokesStepper):
    model = "ns"

    def __init__(
        self,
        grid: StaggeredGrid2D,
        config: StepperConfig,
        forcing: ForcingSpec,
        nl_config: Optional[NonlinearConfig] = None,
    ):
        super().__init__(grid, config, forcing)
        self.nl_config = nl_config or NonlinearConfig()
        if self.nl_config.picard_tol < config.solver_tol:
            raise ConfigurationError(
                f"picard_tol {self.nl_config.picard_tol:g} is below solver_tol {config.solver_tol:g}"
            )
        if not self.nl_config.convection:
            self.model = StokesStepper.model

    def nonlinear_residual(
        self, w_old: VelocityField, w: VelocityField, z: GridField, load: VelocityField
    ) -> float:
        """
        Residual of the implicit equations at (w, z) in the pointwise-scaled l2
        norm, relative to max(1, size of the step's right-hand side).
        """
        op = self.operator
        system = assemble(self.grid, self.config, w_old, load - nonlinear_term(w), op)
        r = op.matrix @ op.dofs.pack(w, z) - system.rhs
        r_u = r[: op.dofs.n_u]
        r_p = r[op.dofs.p]
        value = np.sqrt(np.sum(r_u * r_u / op.weights) + np.sum(r_p * r_p / op.m))
        scale = np.sqrt(np.sum(system.rhs_u * system.rhs_u / op.weights))
        return float(value / max(1.0, scale))

    def step(self, n: int, w_old: VelocityField, t_new: float) -> Tuple[VelocityField, GridField, StepReport]:
        if not self.nl_config.convection:
            return super().step(n, w_old, t_new)

        nl = self.nl_config
        load = self.load(t_new)
        w_k = w_old
        history = []
        linear_iterations = 0
        factorized = False
        residual = np.inf
        for iteration in range(1, nl.max_iters + 1):
            system = assemble(self.grid, self.config, w_old, load - nonlinear_term(w_k), self.operator)
            w_star, z, report = solve_step(system, self.config, self.solver)
            linear_iterations += report.iterations
            factorized = factorized or report.factorized
            # undamped increment
            update = norm_vel_l2(w_star - w_k) / max(1.0, norm_vel_l2(w_star))
            history.append(update)
            w_k = w_star if nl.relaxation == 1.0 else w_star * nl.relaxation + w_k * (1.0 - nl.relaxation)
            if update <= nl.picard_tol:
                residual = self.nonlinear_residual(w_old, w_k, z, load)
                if residual <= 10.0 * nl.picard_tol:
                    break
                logger.debug(f"step {n}: update {update:.2e} met but residual {residual:.2e}, iterating on")
        else:
            raise NonconvergenceError(
                f"Picard iteration did not reach update {nl.picard_tol:.1e} and residual "
                f"{10.0 * nl.picard_tol:.1e} in {nl.max_iters} iterations",
                history,
            )

        logger.debug(f"step {n}: picard iterations={iteration} updates={['%.2e' % u for u in history]}")
        return w_k, z, StepReport(
            step=n,
            time=t_new,
            residual=report.residual,
            linear_iterations=linear_iterations,
            factorized=factorized,
            picard_iterations=iteration,
            picard_update=history[-1],
            nonlinear_residual=residual,
            picard_history=history,
        )


def ns_step(
    grid: StaggeredGrid2D,
    config: StepperConfig,
    nl_config: NonlinearConfig,
    w_old: VelocityField,
    forcing: ForcingSpec,
    t_new: float,
) -> Tuple[VelocityField, GridField, StepReport]:
    """One implicit step from w_old to t_new with a fresh stepper"""
    return NavierStokesStepper(grid, config, forcing, nl_config).step(1, w_old, t_new)


def run(
    grid: StaggeredGrid2D,
    config: StepperConfig,
    forcing: ForcingSpec,
    t_final: float,
    nl_config: Optional[NonlinearConfig] = None,
    observer=None,
    initial: Optional[VelocityField] = None,
    store: bool = True,
) -> Trajectory:
    return NavierStokesStepper(grid, config, forcing, nl_config).run(t_final, observer, initial, store)
