"""
Output files: results and conservation CSVs, field snapshots, grid text files.

All writers go through a temporary file in the target directory followed by
an atomic rename, so concurrent runs never expose half-written files.
"""
import logging
import os
import tempfile
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import pandas as pd

from solver.diagnostics import CONSERVATION_FIELDS, ConservationReport
from solver.errors import GridError
from solver.experiments import ErrorRecord, records_frame
from solver.fields import GridField, VelocityField
from solver.grid import Axis1D, StaggeredGrid2D

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FLOAT_FORMAT = "%.10e"
FIELD_COLUMNS = ["lattice", "i", "j", "x", "y", "value"]


def atomic_write_text(path: PathLike, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    logger.debug(f"Wrote {path}")
    return path


def write_frame(path: PathLike, frame: pd.DataFrame) -> Path:
    return atomic_write_text(path, frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n"))


def write_results_csv(path: PathLike, records: Sequence[ErrorRecord]) -> Path:
    return write_frame(path, records_frame(records))


def write_conservation_csv(path: PathLike, report: ConservationReport) -> Path:
    return write_frame(path, pd.DataFrame(report.rows(), columns=CONSERVATION_FIELDS))


def _field_frame(field: GridField) -> pd.DataFrame:
    X, Y = field.lattice.coords(field.grid)
    I, J = np.indices(field.values.shape)
    return pd.DataFrame(
        {
            "lattice": field.lattice.name,
            "i": I.ravel(),
            "j": J.ravel(),
            "x": X.ravel(),
            "y": Y.ravel(),
            "value": field.values.ravel(),
        },
        columns=FIELD_COLUMNS,
    )


def write_field_csv(path: PathLike, fields: Iterable[GridField]) -> Path:
    return write_frame(path, pd.concat([_field_frame(f) for f in fields], ignore_index=True))


def write_snapshot(path: PathLike, w: VelocityField, z: Optional[GridField] = None) -> Path:
    """W^x, W^y and (if given) Z stacked in one field CSV"""
    fields = [w.x, w.y] + ([z] if z is not None else [])
    return write_field_csv(path, fields)


def grid_to_text(grid: StaggeredGrid2D) -> str:
    lines = (" ".join(f"{v:.17g}" for v in axis.nodes) for axis in (grid.x_axis, grid.y_axis))
    return "\n".join(lines) + "\n"


def grid_from_text(text: str) -> StaggeredGrid2D:
    lines = [line for line in text.splitlines() if line.strip()]
    if len(lines) != 2:
        raise GridError(f"Grid file needs exactly two node lines, got {len(lines)}")
    try:
        axes = [Axis1D(np.array([float(v) for v in line.split()])) for line in lines]
    except ValueError as exc:
        raise GridError(f"Malformed grid file: {exc}") from exc
    return StaggeredGrid2D(*axes)


def export_grid(grid: StaggeredGrid2D, path: PathLike) -> Path:
    return atomic_write_text(path, grid_to_text(grid))


def import_grid(path: PathLike) -> StaggeredGrid2D:
    return grid_from_text(Path(path).read_text())


