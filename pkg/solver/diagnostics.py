"""
Conserved quantities and run-level structure checks.

Momentum and angular momentum are audited as budgets: the per-step drift
must equal dt times (edge flux + forcing - convection), where the edge flux
collects the wall-shear and edge-pressure terms left over after summation
by parts. Under the compact-support condition the edge flux vanishes and
the budget is pure conservation.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from solver.errors import ConfigurationError
from solver.fields import (
    XFACE,
    YFACE,
    GridField,
    VelocityField,
    divergence,
    ip_l2MT,
    ip_l2TM,
    norm_grad,
    norm_linf,
    norm_vel_l2,
)
from solver.forcing import ForcingSpec, assemble_rhs
from solver.navier_stokes import nonlinear_term
from solver.stokes import StepperConfig, Trajectory

logger = logging.getLogger(__name__)


def kinetic_energy(w: VelocityField) -> float:
    """1/2 (||W^x||^2_{l2,T,M} + ||W^y||^2_{l2,M,T})"""
    return 0.5 * norm_vel_l2(w) ** 2


def dissipation(w: VelocityField, mu: float, dt: float) -> float:
    return dt * mu * norm_grad(w) ** 2


def _ones(w: VelocityField) -> Tuple[GridField, GridField]:
    grid = w.grid
    return (
        GridField(grid, XFACE, np.ones(XFACE.shape(grid))),
        GridField(grid, YFACE, np.ones(YFACE.shape(grid))),
    )


def _rotation(w: VelocityField) -> Tuple[GridField, GridField]:
    """(y_{j+1/2}, x_{i+1/2}) sampled on the two velocity lattices"""
    grid = w.grid
    _, y = XFACE.coords(grid)
    x, _ = YFACE.coords(grid)
    return GridField(grid, XFACE, y), GridField(grid, YFACE, x)


def momentum(w: VelocityField) -> Tuple[float, float]:
    ex, ey = _ones(w)
    return ip_l2TM(w.x, ex), ip_l2MT(w.y, ey)


def angular_momentum(w: VelocityField) -> float:
    """(W^x, y)_{l2,T,M} - (W^y, x)_{l2,M,T}"""
    y, x = _rotation(w)
    return ip_l2TM(w.x, y) - ip_l2MT(w.y, x)


def max_divergence(w: VelocityField) -> float:
    return norm_linf(divergence(w))


@dataclass(frozen=True)
class BoundaryFlux:
    x: float
    y: float
    angular: float


def boundary_flux(w: VelocityField, z: GridField, mu: float) -> BoundaryFlux:
    """
    Edge-layer terms of the weighted momentum sums.

    Summing mu*Laplacian(W) - grad(Z) over the momentum rows (weighted by the
    control volumes, times 1 or times the rotation field) telescopes to these
    wall-shear and edge-pressure contributions.
    """
    grid = w.grid
    xa, ya = grid.x_axis, grid.y_axis
    h, k = xa.half_spacings, ya.half_spacings
    h_node, k_node = xa.node_spacings, ya.node_spacings
    x_m, y_m = xa.midpoints, ya.midpoints
    wx, wy, zv = w.x.values, w.y.values, z.values

    dx_wx = np.diff(wx, axis=0) / h[:, None]
    dy_wy = np.diff(wy, axis=1) / k[None, :]
    shear_x_lo = (wx[:, 0] / k_node[0])[1:-1]
    shear_x_hi = (-wx[:, -1] / k_node[-1])[1:-1]
    shear_y_lo = (wy[0, :] / h_node[0])[1:-1]
    shear_y_hi = (-wy[-1, :] / h_node[-1])[1:-1]
    h_int, k_int = h_node[1:-1], k_node[1:-1]
    dz_x = zv[-1, :] - zv[0, :]
    dz_y = zv[:, -1] - zv[:, 0]
    normal_x = dx_wx[-1, :] - dx_wx[0, :]
    normal_y = dy_wy[:, -1] - dy_wy[:, 0]

    fx = mu * (np.sum(k * normal_x) + np.sum(h_int * (shear_x_hi - shear_x_lo))) - np.sum(k * dz_x)
    fy = mu * (np.sum(h * normal_y) + np.sum(k_int * (shear_y_hi - shear_y_lo))) - np.sum(h * dz_y)

    fx_y = mu * (
        np.sum(k * y_m * normal_x)
        + np.sum(h_int * (y_m[-1] * shear_x_hi - y_m[0] * shear_x_lo - (wx[1:-1, -1] - wx[1:-1, 0])))
    ) - np.sum(k * y_m * dz_x)
    fy_x = mu * (
        np.sum(h * x_m * normal_y)
        + np.sum(k_int * (x_m[-1] * shear_y_hi - x_m[0] * shear_y_lo - (wy[-1, 1:-1] - wy[0, 1:-1])))
    ) - np.sum(h * x_m * dz_y)
    return BoundaryFlux(float(fx), float(fy), float(fx_y - fy_x))


@dataclass(frozen=True)
class ConservationTolerances:
    """Scale-relative bounds: factor * tol * scale"""

    tol: float = 1e-10
    factor: float = 100.0
    divergence_factor: float = 10.0

    @property
    def bound(self) -> float:
        return self.factor * self.tol

    @property
    def divergence_bound(self) -> float:
        return self.divergence_factor * self.tol


CONSERVATION_FIELDS = [
    "step",
    "time",
    "kinetic_energy",
    "dissipation",
    "momentum_x",
    "momentum_y",
    "angular_momentum",
    "max_divergence",
    "energy_defect",
    "momentum_x_budget",
    "momentum_y_budget",
    "angular_budget",
    "flags",
]


@dataclass
class ConservationReport:
    model: str
    energy_law_applies: bool
    tolerances: ConservationTolerances
    initial_energy: float = 0.0
    steps: List[int] = field(default_factory=list)
    times: List[float] = field(default_factory=list)
    kinetic_energy: List[float] = field(default_factory=list)
    dissipation: List[float] = field(default_factory=list)
    momentum_x: List[float] = field(default_factory=list)
    momentum_y: List[float] = field(default_factory=list)
    angular_momentum: List[float] = field(default_factory=list)
    max_divergence: List[float] = field(default_factory=list)
    energy_defect: List[float] = field(default_factory=list)
    momentum_x_budget: List[float] = field(default_factory=list)
    momentum_y_budget: List[float] = field(default_factory=list)
    angular_budget: List[float] = field(default_factory=list)
    flags: Dict[str, List[int]] = field(
        default_factory=lambda: {"energy": [], "momentum": [], "angular_momentum": [], "divergence": []}
    )

    @property
    def ok(self) -> bool:
        return not any(self.flags.values())

    def flagged(self, step: int) -> List[str]:
        return [name for name, steps in self.flags.items() if step in steps]

    def rows(self) -> List[Dict[str, object]]:
        rows = []
        for idx, n in enumerate(self.steps):
            rows.append(
                {
                    "step": n,
                    "time": self.times[idx],
                    "kinetic_energy": self.kinetic_energy[idx],
                    "dissipation": self.dissipation[idx],
                    "momentum_x": self.momentum_x[idx],
                    "momentum_y": self.momentum_y[idx],
                    "angular_momentum": self.angular_momentum[idx],
                    "max_divergence": self.max_divergence[idx],
                    "energy_defect": self.energy_defect[idx],
                    "momentum_x_budget": self.momentum_x_budget[idx],
                    "momentum_y_budget": self.momentum_y_budget[idx],
                    "angular_budget": self.angular_budget[idx],
                    "flags": ";".join(self.flagged(n)),
                }
            )
        return rows


class ConservationMonitor:
    """
    Step observer building a ConservationReport on the fly.

    Needs the run's initial velocity; the energy law is only checked for
    runs without forcing.
    """

    def __init__(
        self,
        model: str,
        config: StepperConfig,
        forcing: ForcingSpec,
        initial: VelocityField,
        tolerances: Optional[ConservationTolerances] = None,
    ):
        self.model = model
        self.config = config
        self.forcing = forcing
        self.grid = initial.grid
        self.tolerances = tolerances or ConservationTolerances(tol=config.solver_tol)
        self.report = ConservationReport(model, forcing.vanishes, self.tolerances)
        self.report.initial_energy = kinetic_energy(initial)
        self._w_prev = initial
        self._energy_prev = self.report.initial_energy
        self._mx_prev, self._my_prev = momentum(initial)
        self._ang_prev = angular_momentum(initial)
        self._ex, self._ey = _ones(initial)
        self._y, self._x = _rotation(initial)

    def _source(self, w: VelocityField, t: float) -> VelocityField:
        source = assemble_rhs(self.forcing, self.grid, t)
        if self.model == "ns":
            source = source - nonlinear_term(w)
        return source

    def __call__(self, n: int, w: VelocityField, z: GridField):
        dt, mu = self.config.dt, self.config.mu
        t = n * dt
        tol = self.tolerances
        report = self.report

        energy = kinetic_energy(w)
        diss = dissipation(w, mu, dt)
        mx, my = momentum(w)
        ang = angular_momentum(w)
        div = max_divergence(w)
        flux = boundary_flux(w, z, mu)
        source = self._source(w, t)

        defect = energy - self._energy_prev + diss
        budget_x = (mx - self._mx_prev) - dt * (flux.x + ip_l2TM(source.x, self._ex))
        budget_y = (my - self._my_prev) - dt * (flux.y + ip_l2MT(source.y, self._ey))
        budget_ang = (ang - self._ang_prev) - dt * (
            flux.angular + ip_l2TM(source.x, self._y) - ip_l2MT(source.y, self._x)
        )

        scale = max(1.0, norm_vel_l2(w), norm_vel_l2(self._w_prev))
        if report.energy_law_applies and defect > tol.bound * max(1.0, self._energy_prev):
            report.flags["energy"].append(n)
        if max(abs(budget_x), abs(budget_y)) > tol.bound * scale:
            report.flags["momentum"].append(n)
        if abs(budget_ang) > tol.bound * scale:
            report.flags["angular_momentum"].append(n)
        if div > tol.divergence_bound * max(1.0, norm_linf(w) / self.grid.h_min):
            report.flags["divergence"].append(n)

        report.steps.append(n)
        report.times.append(t)
        report.kinetic_energy.append(energy)
        report.dissipation.append(diss)
        report.momentum_x.append(mx)
        report.momentum_y.append(my)
        report.angular_momentum.append(ang)
        report.max_divergence.append(div)
        report.energy_defect.append(defect)
        report.momentum_x_budget.append(budget_x)
        report.momentum_y_budget.append(budget_y)
        report.angular_budget.append(budget_ang)

        self._w_prev, self._energy_prev = w, energy
        self._mx_prev, self._my_prev, self._ang_prev = mx, my, ang

    def finish(self) -> ConservationReport:
        for name, steps in self.report.flags.items():
            if steps:
                logger.warning(f"{self.model}: {name} violated at {len(steps)} step(s), first at step {steps[0]}")
        return self.report


def check_run(trajectory: Trajectory, tolerances: Optional[ConservationTolerances] = None) -> ConservationReport:
    """Conservation series and violation flags of a run stored at every step"""
    if not trajectory.complete:
        raise ConfigurationError("check_run needs a trajectory stored at every step")
    monitor = ConservationMonitor(
        trajectory.model, trajectory.config, trajectory.forcing, trajectory.velocities[0], tolerances
    )
    for n, w, z in zip(trajectory.steps[1:], trajectory.velocities[1:], trajectory.pressures[1:]):
        monitor(n, w, z)
    return monitor.finish()
