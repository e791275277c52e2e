import numpy as np
import pandas as pd
import pytest

from solver.errors import GridError
from solver.experiments import RESULT_FIELDS, ErrorRecord
from solver.fields import CELL, GridField
from solver.forcing import ForcingSpec
from solver.io import (
    FIELD_COLUMNS,
    atomic_write_text,
    export_grid,
    grid_from_text,
    import_grid,
    write_conservation_csv,
    write_results_csv,
    write_snapshot,
)
from solver.diagnostics import CONSERVATION_FIELDS, check_run
from solver.stokes import StepperConfig, run


def test_atomic_write_creates_parents(tmp_path):
    path = atomic_write_text(tmp_path / "a" / "b" / "out.txt", "hello\n")
    assert path.read_text() == "hello\n"
    assert [p.name for p in path.parent.iterdir()] == ["out.txt"]


def test_results_csv(tmp_path):
    records = [
        ErrorRecord(case="example1", scheme="rmac", model="stokes", nx=5, ny=5, dt=0.04, lam=1.0, mu=1.0,
                    eu_l2=1.5e-2, ep_l2=2.5e-2, eu_linf=3e-2, ep_linf=4e-2, wallclock_s=0.1),
        ErrorRecord(case="example1", scheme="rmac", model="stokes", nx=10, ny=10, dt=0.01, lam=1.0, mu=1.0,
                    error="failed"),
    ]
    path = write_results_csv(tmp_path / "results.csv", records)
    header = path.read_text().splitlines()[0]
    assert header == ",".join(RESULT_FIELDS)
    frame = pd.read_csv(path)
    assert frame["eu_l2"].iloc[0] == pytest.approx(1.5e-2)
    assert np.isnan(frame["eu_l2"].iloc[1])


def test_conservation_csv(tmp_path, nonuniform_grid):
    trajectory = run(nonuniform_grid, StepperConfig(mu=1.0, dt=0.1), ForcingSpec.zero(), 0.2)
    path = write_conservation_csv(tmp_path / "conservation.csv", check_run(trajectory))
    frame = pd.read_csv(path, keep_default_na=False)
    assert list(frame.columns) == CONSERVATION_FIELDS
    assert frame["step"].tolist() == [1, 2]


def test_snapshot_layout(tmp_path, nonuniform_grid, random_velocity):
    w = random_velocity(nonuniform_grid)
    z = GridField.zeros(nonuniform_grid, CELL)
    frame = pd.read_csv(write_snapshot(tmp_path / "snap.csv", w, z))
    assert list(frame.columns) == FIELD_COLUMNS
    assert frame["lattice"].value_counts().to_dict() == {"xface": 9 * 6, "yface": 8 * 7, "cell": 8 * 6}
    xface = frame[frame["lattice"] == "xface"]
    row = xface[(xface["i"] == 3) & (xface["j"] == 2)].iloc[0]
    assert row["value"] == pytest.approx(w.x.values[3, 2], rel=1e-9)
    assert row["x"] == pytest.approx(nonuniform_grid.x_axis.nodes[3], rel=1e-9)


def test_grid_text_round_trip(tmp_path, nonuniform_grid):
    path = export_grid(nonuniform_grid, tmp_path / "grid.txt")
    assert len(path.read_text().splitlines()) == 2
    assert import_grid(path).same_as(nonuniform_grid)


@pytest.mark.parametrize("text", ["0 0.5 1\n", "0 0.5 1\n0 x 1\n", "0 1\n0 1\n0 1\n", "0 0.5 0.4\n0 1\n"])
def test_malformed_grid_text(text):
    with pytest.raises(GridError):
        grid_from_text(text)
