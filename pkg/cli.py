"""
Batch front-end.

    python cli.py solve --case example1 --nx 10
    python cli.py converge --case example2 --model ns --uniform --levels 5 10 20 40 80
    python cli.py robust --case example1 --axis lambda --scheme mac
    python cli.py conserve --model ns --dt 1.0

Exit codes: 0 ok, 2 configuration error, 3 numerical failure.
"""
import argparse
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from pydantic import ValidationError

from config import Settings, configure_logging, format_config, get_settings, load_config_file
from schemas import ConservationSummary, ConserveConfig, ConvergeConfig, RobustConfig, RunConfig, SolveConfig
from solver.cases import COMPACT, ManufacturedCase, Model, get_case
from solver.diagnostics import ConservationReport
from solver.errors import ConfigurationError, GridError, SolverError
from solver.experiments import (
    ErrorRecord,
    SolverOptions,
    compact_run,
    convergence_study,
    format_rates_table,
    robustness_sweep,
    run_case,
)
from solver.fields import GridField, VelocityField
from solver.io import atomic_write_text, export_grid, write_conservation_csv, write_results_csv, write_snapshot
from solver.stokes import Scheme

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

CONFIGS = {
    "solve": SolveConfig,
    "converge": ConvergeConfig,
    "robust": RobustConfig,
    "conserve": ConserveConfig,
}

LIST_KEYS = {"levels", "values", "snapshot"}


@dataclass
class CommandResult:
    records: List[ErrorRecord] = field(default_factory=list)
    conservation: Optional[ConservationReport] = None
    tables: Dict[str, str] = field(default_factory=dict)
    files: List[Path] = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return any(record.failed for record in self.records)


class SnapshotWriter:
    """Observer writing field CSVs at selected steps"""

    def __init__(self, out_dir: Path, steps: Sequence[int]):
        self.out_dir = out_dir
        self.steps = set(steps)
        self.files: List[Path] = []

    def __call__(self, n: int, w: VelocityField, z: GridField):
        if n in self.steps:
            self.files.append(write_snapshot(self.out_dir / f"snapshot_{n:06d}.csv", w, z))


def summarize(report: ConservationReport) -> ConservationSummary:
    budgets = [abs(v) for v in report.momentum_x_budget + report.momentum_y_budget]
    return ConservationSummary(
        model=report.model,
        ok=report.ok,
        steps=len(report.steps),
        energy_law_checked=report.energy_law_applies,
        initial_energy=report.initial_energy,
        final_energy=report.kinetic_energy[-1] if report.kinetic_energy else report.initial_energy,
        max_divergence=max(report.max_divergence, default=0.0),
        max_momentum_budget=max(budgets, default=0.0),
        max_angular_budget=max((abs(v) for v in report.angular_budget), default=0.0),
        flags=report.flags,
    )


def solver_options(config: RunConfig, settings: Settings) -> SolverOptions:
    overrides = {
        key: getattr(config, key)
        for key in ("solver_tol", "picard_tol", "picard_max_iters", "linear_solver")
        if getattr(config, key) is not None
    }
    return replace(settings.solver_options(), **overrides)


def output_dir(config: RunConfig, settings: Settings) -> Path:
    return Path(config.out) if config.out else Path(settings.output_dir)


def manufactured_case(config: RunConfig) -> ManufacturedCase:
    return get_case(config.case, lam=config.lam, mu=config.mu, model=config.model)


def _write_provenance(config: RunConfig, out: Path, command: str) -> Path:
    values = {"command": command, **config.flat(), "out": str(out)}
    return atomic_write_text(out / "resolved_config.txt", format_config(values))


def cmd_solve(config: SolveConfig, settings: Settings, write: bool = True) -> CommandResult:
    grid = config.build_grid()
    dt = config.resolved_dt(config.nx)
    case = manufactured_case(config)
    out = output_dir(config, settings)
    result = CommandResult()
    observers = []
    if write:
        result.files.append(_write_provenance(config, out, "solve"))
        result.files.append(export_grid(grid, out / "grid.txt"))
        if config.snapshot:
            observers.append(SnapshotWriter(out, config.snapshot))

    run = run_case(
        case, config.scheme, grid, dt, config.t_final, solver_options(config, settings),
        conservation=True, observers=observers,
    )
    result.records.append(run.record)
    result.conservation = run.conservation
    if write:
        result.files.append(write_results_csv(out / "results.csv", result.records))
        result.files.append(write_conservation_csv(out / "conservation.csv", run.conservation))
        for writer in observers:
            result.files.extend(writer.files)
    return result


def _tables(records: List[ErrorRecord]) -> str:
    return format_rates_table(records, "l2") + "\n\n" + format_rates_table(records, "linf")


def cmd_converge(config: ConvergeConfig, settings: Settings, write: bool = True) -> CommandResult:
    case = manufactured_case(config)
    family = config.grid_family()
    options = solver_options(config, settings)
    workers = config.max_workers or settings.max_workers
    schemes = [Scheme.RMAC, Scheme.MAC] if config.compare else [config.scheme]
    out = output_dir(config, settings)
    result = CommandResult()
    if write:
        result.files.append(_write_provenance(config, out, "converge"))

    for scheme in schemes:
        records = convergence_study(
            case, scheme, family, config.levels, config.t_final, options,
            dt_rule=config.resolved_dt, max_workers=workers,
        )
        result.records.extend(records)
        result.tables[scheme.value] = _tables(records)
        if write:
            name = f"results_{scheme.value}.csv" if config.compare else "results.csv"
            result.files.append(write_results_csv(out / name, records))
    return result


def cmd_robust(config: RobustConfig, settings: Settings, write: bool = True) -> CommandResult:
    case = manufactured_case(config)
    grid = config.build_grid()
    out = output_dir(config, settings)
    result = CommandResult()
    if write:
        result.files.append(_write_provenance(config, out, "robust"))
    records = robustness_sweep(
        case, config.scheme, grid, config.axis, config.values, config.resolved_dt(config.nx),
        config.t_final, solver_options(config, settings),
        max_workers=config.max_workers or settings.max_workers,
    )
    result.records.extend(records)
    if write:
        result.files.append(write_results_csv(out / f"sweep_{config.axis}.csv", records))
    return result


def cmd_conserve(config: ConserveConfig, settings: Settings, write: bool = True) -> CommandResult:
    grid = config.build_grid()
    dt = config.resolved_dt(config.nx)
    options = solver_options(config, settings)
    out = output_dir(config, settings)
    result = CommandResult()
    if write:
        result.files.append(_write_provenance(config, out, "conserve"))

    if config.case == COMPACT:
        _, report = compact_run(
            grid, config.model or Model.NS, config.mu, dt, config.t_final,
            seed=config.stream_seed, amplitude=config.amplitude, scheme=config.scheme, options=options,
        )
    else:
        run = run_case(manufactured_case(config), config.scheme, grid, dt, config.t_final, options, conservation=True)
        result.records.append(run.record)
        report = run.conservation
    result.conservation = report
    if write:
        result.files.append(write_conservation_csv(out / "conservation.csv", report))
    return result


COMMANDS = {
    "solve": cmd_solve,
    "converge": cmd_converge,
    "robust": cmd_robust,
    "conserve": cmd_conserve,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="flat key = value config file; flags override it")
    common.add_argument("--case", help="example1 | example2 | compact")
    common.add_argument("--scheme", choices=[s.value for s in Scheme])
    common.add_argument("--model", choices=[m.value for m in Model])
    common.add_argument("--nx", type=int)
    common.add_argument("--ny", type=int)
    grid = common.add_mutually_exclusive_group()
    grid.add_argument("--uniform", action="store_true")
    grid.add_argument("--ratio", type=float, help="minimum max/min spacing ratio of the random grid")
    common.add_argument("--seed", type=int, help="grid seed")
    common.add_argument("--dt", type=float)
    common.add_argument("--dt-rule", dest="dt_rule", choices=["inverse_square", "inverse"])
    common.add_argument("--T", dest="t_final", type=float, help="final time")
    common.add_argument("--mu", type=float)
    common.add_argument("--lambda", dest="lam", type=float)
    common.add_argument("--tol", dest="solver_tol", type=float)
    common.add_argument("--picard-tol", dest="picard_tol", type=float)
    common.add_argument("--linear-solver", dest="linear_solver", choices=["direct", "minres"])
    common.add_argument("--out", help="output directory")

    parser = argparse.ArgumentParser(
        description="RMAC/MAC staggered-grid Stokes and Navier-Stokes experiments",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    commands = parser.add_subparsers(dest="command", required=True)

    solve = commands.add_parser("solve", parents=[common], help="one run with errors and conservation audit")
    solve.add_argument("--snapshot", type=int, nargs="+", help="steps to write field CSVs at")

    converge = commands.add_parser("converge", parents=[common], help="refinement study with rates tables")
    converge.add_argument("--levels", type=int, nargs="+")
    converge.add_argument("--compare", action="store_true", help="run RMAC and MAC on the same grids")
    converge.add_argument("--workers", dest="max_workers", type=int)

    robust = commands.add_parser("robust", parents=[common], help="lambda or mu sweep on a fixed grid")
    robust.add_argument("--axis", choices=["lambda", "mu"])
    robust.add_argument("--values", type=float, nargs="+")
    robust.add_argument("--workers", dest="max_workers", type=int)

    conserve = commands.add_parser("conserve", parents=[common], help="conservation audit")
    conserve.add_argument("--amplitude", type=float)
    conserve.add_argument("--stream-seed", dest="stream_seed", type=int)
    return parser


def _split_lists(values: Dict[str, object]) -> Dict[str, object]:
    for key in LIST_KEYS & values.keys():
        if isinstance(values[key], str):
            values[key] = [item for item in values[key].replace(",", " ").split() if item]
    return values


def resolve_config(command: str, flags: Dict[str, object]) -> RunConfig:
    """Config file values overlaid with CLI flags, validated as one model"""
    flags = dict(flags)
    path = flags.pop("config", None)
    values: Dict[str, object] = dict(load_config_file(path)) if path else {}
    values.pop("command", None)
    if "lambda" in values and "lam" in flags:
        values.pop("lambda")
    if "T" in values and "t_final" in flags:
        values.pop("T")
    values.update(flags)
    try:
        return CONFIGS[command].model_validate(_split_lists(values))
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigurationError(problems) from None


def _report(command: str, result: CommandResult):
    for scheme, table in result.tables.items():
        print("=" * 80)
        print(f"{command} {scheme}")
        print(table)
    if command == "robust":
        for r in result.records:
            print(f"lambda={r.lam:g} mu={r.mu:g} eu_l2={r.eu_l2:.3e} ep_l2={r.ep_l2:.3e}")
    if command == "solve":
        r = result.records[0]
        print(f"eu_l2={r.eu_l2:.3e} ep_l2={r.ep_l2:.3e} eu_linf={r.eu_linf:.3e} ep_linf={r.ep_linf:.3e}")
    if result.conservation is not None:
        summary = summarize(result.conservation)
        print(f"conservation: {'ok' if summary.ok else 'violations ' + str({k: len(v) for k, v in summary.flags.items()})}")
    for path in result.files:
        print(f"wrote {path}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    settings = get_settings()
    configure_logging(settings.log_level)

    try:
        config = resolve_config(command, args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        result = COMMANDS[command](config, settings)
    except (ConfigurationError, GridError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    _report(command, result)
    if result.failed:
        print("error: at least one run failed; see the log", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
