"""
Backward-Euler RMAC/MAC step for the time-dependent Stokes equations.

Every momentum row is multiplied by its control volume (h_i k_{j+1/2} for
u^x, h_{i+1/2} k_j for u^y) and every divergence row by its cell measure,
which makes the velocity block symmetric positive definite and gives
B = -G^T exactly. The pressure constant is fixed by a Lagrange multiplier on
the weighted mean, so one step solves

    [ A    G   0 ] [ W ]   [ rhs_u    ]
    [ G^T  0   m ] [ Z ] = [ -rhs_div ]
    [ 0    m^T 0 ] [ l ]   [ 0        ]
"""
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from solver.errors import ConfigurationError, SolverError
from solver.fields import CELL, XFACE, YFACE, GridField, VelocityField
from solver.forcing import ForcingMode, ForcingSpec, assemble_rhs
from solver.grid import Axis1D, StaggeredGrid2D

logger = logging.getLogger(__name__)

MIN_SOLVER_TOL = 1e-14


class Scheme(str, Enum):
    RMAC = "rmac"
    MAC = "mac"

    @property
    def forcing_mode(self) -> ForcingMode:
        return ForcingMode.AVERAGED if self is Scheme.RMAC else ForcingMode.POINTWISE


class LinearSolverKind(str, Enum):
    DIRECT = "direct"
    MINRES = "minres"


@dataclass(frozen=True)
class StepperConfig:
    mu: float
    dt: float
    scheme: Scheme = Scheme.RMAC
    linear_solver: LinearSolverKind = LinearSolverKind.DIRECT
    solver_tol: float = 1e-10
    max_linear_iters: int = 5000
    reuse_factorization: bool = True

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "linear_solver", LinearSolverKind(self.linear_solver))
        if not self.mu > 0.0:
            raise ConfigurationError(f"mu must be positive, got {self.mu}")
        if not self.dt > 0.0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if not self.solver_tol >= MIN_SOLVER_TOL:
            raise ConfigurationError(f"solver_tol must be >= {MIN_SOLVER_TOL}, got {self.solver_tol}")


@dataclass(frozen=True)
class DofMap:
    """Unknown ordering: interior u^x, interior u^y, all p, one multiplier"""

    grid: StaggeredGrid2D

    @property
    def n_ux(self) -> int:
        return (self.grid.nx - 1) * self.grid.ny

    @property
    def n_uy(self) -> int:
        return self.grid.nx * (self.grid.ny - 1)

    @property
    def n_u(self) -> int:
        return self.n_ux + self.n_uy

    @property
    def n_p(self) -> int:
        return self.grid.nx * self.grid.ny

    @property
    def size(self) -> int:
        return self.n_u + self.n_p + 1

    @property
    def ux(self) -> slice:
        return slice(0, self.n_ux)

    @property
    def uy(self) -> slice:
        return slice(self.n_ux, self.n_u)

    @property
    def p(self) -> slice:
        return slice(self.n_u, self.n_u + self.n_p)

    def pack_velocity(self, w: VelocityField) -> np.ndarray:
        return np.concatenate((w.x.values[1:-1, :].ravel(), w.y.values[:, 1:-1].ravel()))

    def pack(self, w: VelocityField, z: Optional[GridField] = None, multiplier: float = 0.0) -> np.ndarray:
        z_values = np.zeros(self.n_p) if z is None else z.values.ravel()
        return np.concatenate((self.pack_velocity(w), z_values, [multiplier]))

    def velocity(self, vector: np.ndarray) -> VelocityField:
        grid = self.grid
        wx = np.zeros(XFACE.shape(grid))
        wy = np.zeros(YFACE.shape(grid))
        wx[1:-1, :] = vector[self.ux].reshape(grid.nx - 1, grid.ny)
        wy[:, 1:-1] = vector[self.uy].reshape(grid.nx, grid.ny - 1)
        return VelocityField(GridField(grid, XFACE, wx), GridField(grid, YFACE, wy))

    def pressure(self, vector: np.ndarray) -> GridField:
        return GridField(self.grid, CELL, vector[self.p].reshape(self.grid.nx, self.grid.ny).copy())


def _node_to_half_difference(n: int) -> sp.csr_matrix:
    """E: (f_{k+1} - f_k) for k = 0..n-1, restricted to interior nodes 1..n-1"""
    full = sp.diags([-np.ones(n), np.ones(n)], [0, 1], shape=(n, n + 1), format="csr")
    return full[:, 1:-1]


def _half_to_node_difference(n: int) -> sp.csr_matrix:
    """F: (f_{m+1/2} - f_{m-1/2}) for m = 0..n with zero walls"""
    return sp.diags([np.ones(n), -np.ones(n)], [0, -1], shape=(n + 1, n), format="csr")


def _interior_stiffness(axis: Axis1D) -> sp.csr_matrix:
    E = _node_to_half_difference(axis.n)
    return (E.T @ sp.diags(1.0 / axis.half_spacings) @ E).tocsr()


def _wall_stiffness(axis: Axis1D) -> sp.csr_matrix:
    F = _half_to_node_difference(axis.n)
    return (F.T @ sp.diags(1.0 / axis.node_spacings) @ F).tocsr()


@dataclass(frozen=True, eq=False)
class SaddleOperator:
    """Matrix part of one implicit step; depends only on (grid, mu, dt)"""

    grid: StaggeredGrid2D
    mu: float
    dt: float
    dofs: DofMap
    A: sp.csr_matrix
    G: sp.csr_matrix
    m: np.ndarray
    weights: np.ndarray
    matrix: sp.csc_matrix

    @property
    def B(self) -> sp.csr_matrix:
        """Cell-measure weighted divergence"""
        return (-self.G.T).tocsr()


@dataclass(frozen=True, eq=False)
class SaddleSystem:
    operator: SaddleOperator
    rhs_u: np.ndarray
    rhs_div: np.ndarray

    @property
    def dofs(self) -> DofMap:
        return self.operator.dofs

    @property
    def rhs(self) -> np.ndarray:
        return np.concatenate((self.rhs_u, -self.rhs_div, [0.0]))


def assemble_operator(grid: StaggeredGrid2D, config: StepperConfig) -> SaddleOperator:
    xa, ya = grid.x_axis, grid.y_axis
    h_int = sp.diags(xa.node_spacings[1:-1])
    k_int = sp.diags(ya.node_spacings[1:-1])
    h_half = sp.diags(xa.half_spacings)
    k_half = sp.diags(ya.half_spacings)

    mass_x = sp.kron(h_int, k_half)
    mass_y = sp.kron(h_half, k_int)
    stiff_x = sp.kron(_interior_stiffness(xa), k_half) + sp.kron(h_int, _wall_stiffness(ya))
    stiff_y = sp.kron(_wall_stiffness(xa), k_int) + sp.kron(h_half, _interior_stiffness(ya))
    A = sp.block_diag(
        (mass_x / config.dt + config.mu * stiff_x, mass_y / config.dt + config.mu * stiff_y),
        format="csr",
    )

    G = sp.vstack(
        (
            -sp.kron(_node_to_half_difference(xa.n).T, k_half),
            -sp.kron(h_half, _node_to_half_difference(ya.n).T),
        ),
        format="csr",
    )
    m = grid.cell_measures.ravel()
    weights = np.concatenate((mass_x.diagonal(), mass_y.diagonal()))

    matrix = sp.bmat(
        [
            [A, G, None],
            [G.T, None, sp.csr_matrix(m[:, None])],
            [None, sp.csr_matrix(m[None, :]), None],
        ],
        format="csc",
    )
    dofs = DofMap(grid)
    logger.debug(f"Assembled saddle operator {grid!r}: {dofs.size} unknowns, nnz={matrix.nnz}")
    return SaddleOperator(grid, config.mu, config.dt, dofs, A, G, m, weights, matrix)


def assemble(
    grid: StaggeredGrid2D,
    config: StepperConfig,
    w_old: VelocityField,
    rhs: VelocityField,
    operator: Optional[SaddleOperator] = None,
) -> SaddleSystem:
    """
    One backward-Euler step: loads are control-volume weighted
    W_old / dt + f on every momentum row; the divergence rows are homogeneous.
    """
    if operator is None:
        operator = assemble_operator(grid, config)
    for part in (w_old.x, w_old.y, rhs.x, rhs.y):
        if part.grid is not grid and not part.grid.same_as(grid):
            raise ConfigurationError("Velocity data and grid are inconsistent")
    dofs = operator.dofs
    load = dofs.pack_velocity(w_old) / config.dt + dofs.pack_velocity(rhs)
    return SaddleSystem(operator, operator.weights * load, np.zeros(dofs.n_p))


@dataclass
class SolveReport:
    residual: float
    iterations: int
    factorized: bool
    method: LinearSolverKind
    residual_history: List[float] = field(default_factory=list)


def _relative_residual(matrix, x: np.ndarray, b: np.ndarray, b_norm: float) -> float:
    return float(np.linalg.norm(matrix @ x - b) / b_norm)


def _splu(matrix: sp.csc_matrix, what: str):
    try:
        return spla.splu(matrix)
    except RuntimeError as exc:
        raise SolverError(f"Sparse factorization of the {what} failed: {exc}") from exc


class SaddleSolver:
    """Linear solves with one operator, keeping its factorization between steps"""

    REFINEMENT_SWEEPS = 3

    def __init__(self, operator: SaddleOperator, config: StepperConfig):
        self.operator = operator
        self.config = config
        self.factorizations = 0
        self._lu = None
        self._preconditioner = None

    def _factor(self):
        self._lu = _splu(self.operator.matrix, "saddle matrix")
        self.factorizations += 1
        logger.debug(f"Factorized saddle matrix ({self.factorizations} so far)")

    def _solve_direct(self, b: np.ndarray, b_norm: float) -> Tuple[np.ndarray, SolveReport]:
        factorized = False
        if self._lu is None or not self.config.reuse_factorization:
            self._factor()
            factorized = True
        x = self._lu.solve(b)
        history = [_relative_residual(self.operator.matrix, x, b, b_norm)]
        for _ in range(self.REFINEMENT_SWEEPS):
            if history[-1] <= self.config.solver_tol:
                break
            x = x + self._lu.solve(b - self.operator.matrix @ x)
            history.append(_relative_residual(self.operator.matrix, x, b, b_norm))
        report = SolveReport(history[-1], len(history), factorized, LinearSolverKind.DIRECT, history)
        return x, report

    def _build_preconditioner(self) -> spla.LinearOperator:
        op = self.operator
        dofs = op.dofs
        a_lu = _splu(op.A.tocsc(), "velocity block")
        # modified Schur complement G^T diag(A)^-1 G, lifted on the constant mode
        schur = (op.G.T @ sp.diags(1.0 / op.A.diagonal()) @ op.G).tocsc()
        shift = 1e-2 * schur.diagonal().mean() / op.m.mean()
        s_lu = _splu((schur + shift * sp.diags(op.m)).tocsc(), "Schur complement")

        def apply(r: np.ndarray) -> np.ndarray:
            r = np.ravel(r)
            out = np.empty_like(r)
            out[: dofs.n_u] = a_lu.solve(r[: dofs.n_u])
            out[dofs.p] = s_lu.solve(r[dofs.p])
            out[-1] = r[-1]
            return out

        return spla.LinearOperator((dofs.size, dofs.size), matvec=apply, dtype=float)

    def _solve_minres(self, b: np.ndarray, b_norm: float) -> Tuple[np.ndarray, SolveReport]:
        factorized = False
        if self._preconditioner is None or not self.config.reuse_factorization:
            self._preconditioner = self._build_preconditioner()
            self.factorizations += 1
            factorized = True
        matrix = self.operator.matrix
        tol = self.config.solver_tol
        history: List[float] = []
        x = np.zeros_like(b)

        # MINRES stops on the preconditioned residual; correction sweeps bring the true one under tol
        for _ in range(1 + self.REFINEMENT_SWEEPS):
            r = b - matrix @ x
            base = x

            def record(xk):
                history.append(_relative_residual(matrix, base + xk, b, b_norm))

            dx, info = spla.minres(
                matrix,
                r,
                rtol=0.1 * tol,
                maxiter=self.config.max_linear_iters,
                M=self._preconditioner,
                callback=record,
            )
            x = base + dx
            residual = _relative_residual(matrix, x, b, b_norm)
            if info != 0 and residual > tol:
                raise SolverError(f"MINRES stopped with info={info}", history + [residual])
            if residual <= tol:
                break
        return x, SolveReport(residual, len(history), factorized, LinearSolverKind.MINRES, history)

    def solve(self, b: np.ndarray) -> Tuple[np.ndarray, SolveReport]:
        b_norm = float(np.linalg.norm(b))
        if b_norm == 0.0:
            return np.zeros_like(b), SolveReport(0.0, 0, False, self.config.linear_solver)
        if self.config.linear_solver is LinearSolverKind.DIRECT:
            x, report = self._solve_direct(b, b_norm)
        else:
            x, report = self._solve_minres(b, b_norm)
        if not np.isfinite(report.residual) or report.residual > self.config.solver_tol:
            raise SolverError(
                f"Relative residual {report.residual:.3e} above solver_tol {self.config.solver_tol:.1e}",
                report.residual_history,
            )
        return x, report


def solve_step(
    system: SaddleSystem, config: StepperConfig, solver: Optional[SaddleSolver] = None
) -> Tuple[VelocityField, GridField, SolveReport]:
    if solver is None:
        solver = SaddleSolver(system.operator, config)
    x, report = solver.solve(system.rhs)
    dofs = system.dofs
    return dofs.velocity(x), dofs.pressure(x), report


@dataclass
class StepReport:
    step: int
    time: float
    residual: float
    linear_iterations: int
    factorized: bool
    picard_iterations: int = 0
    picard_update: float = 0.0
    nonlinear_residual: float = 0.0
    picard_history: List[float] = field(default_factory=list)


Observer = Callable[[int, VelocityField, GridField], None]


@dataclass
class Trajectory:
    """
    Time levels 0..N. ``pressures[0]`` is a zero placeholder (no pressure
    at t = 0); ``reports[n - 1]`` belongs to step n. With ``store=False``
    only the initial and final levels are kept.
    """

    grid: StaggeredGrid2D
    config: StepperConfig
    forcing: ForcingSpec
    model: str
    steps: List[int] = field(default_factory=list)
    times: List[float] = field(default_factory=list)
    velocities: List[VelocityField] = field(default_factory=list)
    pressures: List[GridField] = field(default_factory=list)
    reports: List[StepReport] = field(default_factory=list)
    wallclock_s: float = 0.0

    def append(self, n: int, t: float, w: VelocityField, z: GridField):
        self.steps.append(n)
        self.times.append(t)
        self.velocities.append(w)
        self.pressures.append(z)

    @property
    def n_steps(self) -> int:
        return self.steps[-1] if self.steps else 0

    @property
    def complete(self) -> bool:
        return len(self.steps) == self.n_steps + 1


def step_count(t_final: float, dt: float) -> int:
    n = int(round(t_final / dt))
    if n < 1 or abs(n * dt - t_final) > 1e-9 * max(1.0, abs(t_final)):
        raise ConfigurationError(f"T_final={t_final} is not an integer multiple of dt={dt}")
    return n


class StokesStepper:
    model = "stokes"

    def __init__(self, grid: StaggeredGrid2D, config: StepperConfig, forcing: ForcingSpec):
        self.grid = grid
        self.config = config
        self.forcing = forcing.with_mode(config.scheme.forcing_mode)
        self.operator = assemble_operator(grid, config)
        self.solver = SaddleSolver(self.operator, config)

    def load(self, t: float) -> VelocityField:
        return assemble_rhs(self.forcing, self.grid, t)

    def step(self, n: int, w_old: VelocityField, t_new: float) -> Tuple[VelocityField, GridField, StepReport]:
        system = assemble(self.grid, self.config, w_old, self.load(t_new), self.operator)
        w, z, report = solve_step(system, self.config, self.solver)
        return w, z, StepReport(n, t_new, report.residual, report.iterations, report.factorized)

    def run(
        self,
        t_final: float,
        observer: Optional[Observer] = None,
        initial: Optional[VelocityField] = None,
        store: bool = True,
    ) -> Trajectory:
        n_steps = step_count(t_final, self.config.dt)
        w = VelocityField.zeros(self.grid) if initial is None else initial.with_dirichlet()
        z = GridField.zeros(self.grid, CELL)
        trajectory = Trajectory(self.grid, self.config, self.forcing, self.model)
        trajectory.append(0, 0.0, w, z)
        logger.info(
            f"{self.model} run {self.grid!r} scheme={self.config.scheme.value} "
            f"mu={self.config.mu:g} dt={self.config.dt:g} steps={n_steps}"
        )
        started = time.perf_counter()
        for n in range(1, n_steps + 1):
            t = n * self.config.dt
            try:
                w, z, report = self.step(n, w, t)
            except SolverError as exc:
                logger.error(f"Run aborted at step {n}: {exc}")
                raise exc.at_step(n) from exc
            trajectory.reports.append(report)
            logger.debug(f"step {n} t={t:.6g} residual={report.residual:.2e}")
            if store or n == n_steps:
                trajectory.append(n, t, w, z)
            if observer is not None:
                observer(n, w, z)
        trajectory.wallclock_s = time.perf_counter() - started
        logger.info(f"{self.model} run finished in {trajectory.wallclock_s:.2f}s")
        return trajectory


def run(
    grid: StaggeredGrid2D,
    config: StepperConfig,
    forcing: ForcingSpec,
    t_final: float,
    observer: Optional[Observer] = None,
    initial: Optional[VelocityField] = None,
    store: bool = True,
) -> Trajectory:
    """Time loop from W^0 (zero unless ``initial`` is given) to T = N dt"""
    return StokesStepper(grid, config, forcing).run(t_final, observer, initial, store)
