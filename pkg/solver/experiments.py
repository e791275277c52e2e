"""
Error measurement against manufactured solutions, refinement studies and
lambda/mu sweeps.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from solver.cases import ManufacturedCase, Model, compact_support_velocity
from solver.diagnostics import ConservationMonitor, ConservationReport, ConservationTolerances
from solver.errors import ConfigurationError, RMACError
from solver.fields import (
    GridField,
    VelocityField,
    norm_l2M,
    norm_linf,
    norm_vel_l2,
    project_zero_mean,
    sample_cells,
)
from solver.forcing import ForcingSpec
from solver.grid import StaggeredGrid2D, build_random_nonuniform, build_uniform
from solver.navier_stokes import NavierStokesStepper, NonlinearConfig
from solver.stokes import LinearSolverKind, Observer, Scheme, StepperConfig, StokesStepper, Trajectory

logger = logging.getLogger(__name__)

LAMBDA_SWEEP = (1.0, 1e2, 1e4, 1e6)
MU_SWEEP = (1.0, 1e-2, 1e-4, 1e-6)

RESULT_FIELDS = [
    "case",
    "scheme",
    "Nx",
    "Ny",
    "dt",
    "lambda",
    "mu",
    "eu_l2",
    "rate_u",
    "ep_l2",
    "rate_p",
    "eu_linf",
    "ep_linf",
    "wallclock_s",
]


@dataclass(frozen=True)
class SolverOptions:
    solver_tol: float = 1e-10
    linear_solver: LinearSolverKind = LinearSolverKind.DIRECT
    picard_tol: float = 1e-10
    picard_max_iters: int = 50
    relaxation: float = 1.0
    quadrature_order: int = 6

    def stepper_config(self, mu: float, dt: float, scheme: Scheme) -> StepperConfig:
        return StepperConfig(
            mu=mu, dt=dt, scheme=scheme, linear_solver=self.linear_solver, solver_tol=self.solver_tol
        )

    def nonlinear_config(self) -> NonlinearConfig:
        return NonlinearConfig(
            picard_tol=self.picard_tol, max_iters=self.picard_max_iters, relaxation=self.relaxation
        )

    def tolerances(self, model: str) -> ConservationTolerances:
        tol = max(self.solver_tol, self.picard_tol) if model == Model.NS.value else self.solver_tol
        return ConservationTolerances(tol=tol)


@dataclass
class ErrorRecord:
    case: str
    scheme: str
    model: str
    nx: int
    ny: int
    dt: float
    lam: float
    mu: float
    t_final: float = 1.0
    eu_l2: float = math.nan
    ep_l2: float = math.nan
    eu_linf: float = math.nan
    ep_linf: float = math.nan
    rate_u: Optional[float] = None
    rate_p: Optional[float] = None
    rate_u_linf: Optional[float] = None
    rate_p_linf: Optional[float] = None
    wallclock_s: float = 0.0
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def as_row(self) -> dict:
        return {
            "case": self.case,
            "scheme": self.scheme,
            "Nx": self.nx,
            "Ny": self.ny,
            "dt": self.dt,
            "lambda": self.lam,
            "mu": self.mu,
            "eu_l2": self.eu_l2,
            "rate_u": self.rate_u,
            "ep_l2": self.ep_l2,
            "rate_p": self.rate_p,
            "eu_linf": self.eu_linf,
            "ep_linf": self.ep_linf,
            "wallclock_s": self.wallclock_s,
        }


class ErrorAccumulator:
    """Step observer keeping the l-infinity-in-time maxima of the velocity and pressure errors"""

    def __init__(self, case: ManufacturedCase, grid: StaggeredGrid2D, dt: float):
        self.case = case
        self.grid = grid
        self.dt = dt
        self.eu_l2 = 0.0
        self.ep_l2 = 0.0
        self.eu_linf = 0.0
        self.ep_linf = 0.0
        self.steps = 0

    def __call__(self, n: int, w: VelocityField, z: GridField):
        t = n * self.dt
        e_u = w - self.case.exact_velocity(self.grid, t)
        e_p = z - project_zero_mean(sample_cells(self.grid, self.case.pressure, t))
        self.eu_l2 = max(self.eu_l2, norm_vel_l2(e_u))
        self.ep_l2 = max(self.ep_l2, norm_l2M(e_p))
        self.eu_linf = max(self.eu_linf, norm_linf(e_u))
        self.ep_linf = max(self.ep_linf, norm_linf(e_p))
        self.steps += 1

    def fill(self, record: ErrorRecord) -> ErrorRecord:
        record.eu_l2, record.ep_l2 = self.eu_l2, self.ep_l2
        record.eu_linf, record.ep_linf = self.eu_linf, self.ep_linf
        return record


def _record(case: ManufacturedCase, scheme: Scheme, grid: StaggeredGrid2D, dt: float, t_final: float) -> ErrorRecord:
    return ErrorRecord(
        case=case.name,
        scheme=Scheme(scheme).value,
        model=case.model.value,
        nx=grid.nx,
        ny=grid.ny,
        dt=dt,
        lam=case.lam,
        mu=case.mu,
        t_final=t_final,
    )


def compute_errors(trajectory: Trajectory, case: ManufacturedCase, grid: StaggeredGrid2D) -> ErrorRecord:
    """Errors over levels 1..N of a trajectory stored at every step"""
    if not trajectory.complete:
        raise ConfigurationError("compute_errors needs a trajectory stored at every step")
    config = trajectory.config
    accumulator = ErrorAccumulator(case, grid, config.dt)
    for n, w, z in zip(trajectory.steps[1:], trajectory.velocities[1:], trajectory.pressures[1:]):
        accumulator(n, w, z)
    record = _record(case, config.scheme, grid, config.dt, trajectory.times[-1])
    record.wallclock_s = trajectory.wallclock_s
    return accumulator.fill(record)


def make_stepper(
    case: ManufacturedCase, grid: StaggeredGrid2D, config: StepperConfig, options: SolverOptions, forcing=None
) -> StokesStepper:
    forcing = forcing or case.forcing_spec(config.scheme.forcing_mode, options.quadrature_order)
    if case.model is Model.NS:
        return NavierStokesStepper(grid, config, forcing, options.nonlinear_config())
    return StokesStepper(grid, config, forcing)


@dataclass
class CaseRun:
    record: ErrorRecord
    trajectory: Trajectory
    conservation: Optional[ConservationReport] = None


def run_case(
    case: ManufacturedCase,
    scheme: Scheme,
    grid: StaggeredGrid2D,
    dt: float,
    t_final: float = 1.0,
    options: SolverOptions = SolverOptions(),
    store: bool = False,
    conservation: bool = False,
    observers: Sequence[Observer] = (),
) -> CaseRun:
    """One run from the exact initial velocity, errors accumulated on the fly"""
    scheme = Scheme(scheme)
    config = options.stepper_config(case.mu, dt, scheme)
    stepper = make_stepper(case, grid, config, options)
    initial = case.initial_velocity(grid)
    accumulator = ErrorAccumulator(case, grid, dt)
    watchers: List[Observer] = [accumulator, *observers]
    monitor = None
    if conservation:
        monitor = ConservationMonitor(stepper.model, config, stepper.forcing, initial, options.tolerances(stepper.model))
        watchers.append(monitor)

    def observe(n: int, w: VelocityField, z: GridField):
        for watcher in watchers:
            watcher(n, w, z)

    trajectory = stepper.run(t_final, observer=observe, initial=initial, store=store)
    record = accumulator.fill(_record(case, scheme, grid, dt, t_final))
    record.wallclock_s = trajectory.wallclock_s
    logger.info(
        f"{case.name} {scheme.value} {grid.nx}x{grid.ny} lambda={case.lam:g} mu={case.mu:g}: "
        f"eu_l2={record.eu_l2:.3e} ep_l2={record.ep_l2:.3e} eu_linf={record.eu_linf:.3e} ep_linf={record.ep_linf:.3e}"
    )
    return CaseRun(record, trajectory, monitor.finish() if monitor else None)


def compact_run(
    grid: StaggeredGrid2D,
    model: Model,
    mu: float,
    dt: float,
    t_final: float = 1.0,
    seed: int = 11,
    amplitude: float = 1.0,
    scheme: Scheme = Scheme.RMAC,
    options: SolverOptions = SolverOptions(),
    store: bool = False,
    observers: Sequence[Observer] = (),
) -> Tuple[Trajectory, ConservationReport]:
    """Unforced run from compact-support solenoidal data, audited step by step"""
    scheme = Scheme(scheme)
    config = options.stepper_config(mu, dt, scheme)
    forcing = ForcingSpec.zero(scheme.forcing_mode)
    if Model(model) is Model.NS:
        stepper = NavierStokesStepper(grid, config, forcing, options.nonlinear_config())
    else:
        stepper = StokesStepper(grid, config, forcing)
    initial = compact_support_velocity(grid, seed, amplitude)
    monitor = ConservationMonitor(stepper.model, config, stepper.forcing, initial, options.tolerances(stepper.model))

    def observe(n: int, w: VelocityField, z: GridField):
        monitor(n, w, z)
        for watcher in observers:
            watcher(n, w, z)

    trajectory = stepper.run(t_final, observer=observe, initial=initial, store=store)
    report = monitor.finish()
    logger.info(f"compact {stepper.model} {grid.nx}x{grid.ny}: conservation {'ok' if report.ok else 'VIOLATED'}")
    return trajectory, report


@dataclass(frozen=True)
class GridFamily:
    """Grids of one kind at any resolution; non-uniform levels share the seed"""

    uniform: bool = False
    ratio: float = 1.5
    seed: int = 7
    lengths: Tuple[float, float] = (1.0, 1.0)

    def build(self, n_x: int, n_y: Optional[int] = None) -> StaggeredGrid2D:
        n_y = n_x if n_y is None else n_y
        if self.uniform:
            return build_uniform(n_x, n_y, self.lengths)
        return build_random_nonuniform(n_x, n_y, self.lengths, self.ratio, self.seed)

    @property
    def label(self) -> str:
        return "uniform" if self.uniform else f"nonuniform(ratio={self.ratio:g}, seed={self.seed})"


def default_dt_rule(n: int) -> float:
    return 1.0 / n**2


def _rate(coarse: float, fine: float, n_coarse: int, n_fine: int) -> Optional[float]:
    if not (np.isfinite(coarse) and np.isfinite(fine)) or coarse <= 0.0 or fine <= 0.0:
        return None
    return float(np.log(coarse / fine) / np.log(n_fine / n_coarse))


def attach_rates(records: List[ErrorRecord]) -> List[ErrorRecord]:
    for coarse, fine in zip(records, records[1:]):
        fine.rate_u = _rate(coarse.eu_l2, fine.eu_l2, coarse.nx, fine.nx)
        fine.rate_p = _rate(coarse.ep_l2, fine.ep_l2, coarse.nx, fine.nx)
        fine.rate_u_linf = _rate(coarse.eu_linf, fine.eu_linf, coarse.nx, fine.nx)
        fine.rate_p_linf = _rate(coarse.ep_linf, fine.ep_linf, coarse.nx, fine.nx)
    return records


def _guarded(job: Callable[[], CaseRun], placeholder: ErrorRecord) -> ErrorRecord:
    try:
        return job().record
    except RMACError as exc:
        logger.warning(f"{placeholder.case} {placeholder.nx}x{placeholder.ny} failed: {exc}")
        return replace(placeholder, error=str(exc))


def _map_ordered(jobs: List[Callable[[], ErrorRecord]], max_workers: int) -> List[ErrorRecord]:
    if max_workers <= 1 or len(jobs) <= 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(lambda job: job(), jobs))


def convergence_study(
    case: ManufacturedCase,
    scheme: Scheme,
    family: GridFamily,
    levels: Sequence[int],
    t_final: float = 1.0,
    options: SolverOptions = SolverOptions(),
    dt_rule: Callable[[int], float] = default_dt_rule,
    max_workers: int = 1,
) -> List[ErrorRecord]:
    """
    Runs every level N with dt = dt_rule(N) on family.build(N).

    A failing level keeps its place with ``error`` set and NaN errors; the
    remaining levels still run. Rates compare consecutive levels.
    """
    levels = [int(n) for n in levels]
    if len(levels) < 2:
        raise ConfigurationError("A convergence study needs at least two levels")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigurationError(f"Levels must be strictly increasing, got {levels}")
    scheme = Scheme(scheme)
    logger.info("=" * 80)
    logger.info(f"Convergence study: {case.name} {scheme.value} {family.label} levels={levels}")

    def job_for(n: int):
        grid = family.build(n)
        dt = dt_rule(n)
        placeholder = _record(case, scheme, grid, dt, t_final)
        return lambda: _guarded(lambda: run_case(case, scheme, grid, dt, t_final, options), placeholder)

    records = attach_rates(_map_ordered([job_for(n) for n in levels], max_workers))
    logger.info("=" * 80)
    return records


def robustness_sweep(
    case: ManufacturedCase,
    scheme: Scheme,
    grid: StaggeredGrid2D,
    axis: str,
    values: Optional[Sequence[float]] = None,
    dt: Optional[float] = None,
    t_final: float = 1.0,
    options: SolverOptions = SolverOptions(),
    max_workers: int = 1,
) -> List[ErrorRecord]:
    """One record per lambda (or mu) value on a fixed grid and time step"""
    if axis not in ("lambda", "mu"):
        raise ConfigurationError(f"Sweep axis must be 'lambda' or 'mu', got '{axis}'")
    if values is None:
        values = LAMBDA_SWEEP if axis == "lambda" else MU_SWEEP
    values = sorted({float(v) for v in values}, reverse=axis == "mu")
    dt = default_dt_rule(grid.nx) if dt is None else dt
    scheme = Scheme(scheme)
    logger.info(f"Robustness sweep: {case.name} {scheme.value} {axis} over {values}")

    def job_for(value: float):
        swept = case.with_params(lam=value) if axis == "lambda" else case.with_params(mu=value)
        placeholder = _record(swept, scheme, grid, dt, t_final)
        return lambda: _guarded(lambda: run_case(swept, scheme, grid, dt, t_final, options), placeholder)

    return _map_ordered([job_for(v) for v in values], max_workers)


def records_frame(records: Sequence[ErrorRecord]) -> pd.DataFrame:
    return pd.DataFrame([r.as_row() for r in records], columns=RESULT_FIELDS)


def _fmt(value: Optional[float], spec: str) -> str:
    if value is None or not np.isfinite(value):
        return "-"
    return format(value, spec)


def format_rates_table(records: Sequence[ErrorRecord], norm: str = "l2") -> str:
    """Grid | ||e^p|| | Rate | ||e^u|| | Rate, one row per level"""
    linf = norm == "linf"
    rows = []
    for r in records:
        rows.append(
            {
                "Grid": f"{r.nx}x{r.ny}",
                "||e^p||": _fmt(r.ep_linf if linf else r.ep_l2, ".2e"),
                "Rate(p)": _fmt(r.rate_p_linf if linf else r.rate_p, ".2f"),
                "||e^u||": _fmt(r.eu_linf if linf else r.eu_l2, ".2e"),
                "Rate(u)": _fmt(r.rate_u_linf if linf else r.rate_u, ".2f"),
            }
        )
    title = "l_inf(l_inf)" if linf else "l_inf(l2)"
    return f"{title}\n" + pd.DataFrame(rows).to_string(index=False)
