import pytest
from fastapi.testclient import TestClient

from main import app

SMALL = {"nx": 4, "uniform": True, "T": 0.25, "dt": 0.0625}


@pytest.fixture
def client():
    with TestClient(app) as client:
        yield client


def test_health(client):
    assert client.get("/health").json() == {"status": "healthy"}
    assert client.get("/").status_code == 200


def test_list_cases(client):
    response = client.get("/cases")
    assert response.status_code == 200
    cases = {c["name"]: c for c in response.json()}
    assert set(cases) == {"example1", "example2", "compact"}
    assert cases["example1"]["default_model"] == "stokes"
    assert cases["example2"]["default_model"] == "ns"
    assert cases["compact"]["has_exact_solution"] is False


def test_get_case(client):
    assert client.get("/cases/example2").json()["has_exact_solution"] is True
    assert client.get("/cases/example9").status_code == 404


def test_solve(client):
    response = client.post("/runs/solve", json={"case": "example1", **SMALL})
    assert response.status_code == 200
    body = response.json()
    assert body["record"]["nx"] == 4
    assert body["record"]["eu_l2"] > 0.0
    assert body["record"]["rate_u"] is None
    assert body["conservation"]["steps"] == 4
    assert body["conservation"]["ok"] is True
    assert body["files"] == []


def test_solve_writes_files_when_out_is_given(client, tmp_path):
    response = client.post("/runs/solve", json={"case": "example1", **SMALL, "out": str(tmp_path / "api")})
    assert response.status_code == 200
    assert (tmp_path / "api" / "results.csv").exists()
    assert len(response.json()["files"]) == 4


@pytest.mark.parametrize(
    "body",
    [
        {**SMALL},
        {"case": "example1", **SMALL, "resolution": 8},
        {"case": "example1", "nx": 4, "T": 1.0, "dt": 0.3},
        {"case": "compact", **SMALL},
    ],
)
def test_invalid_body(client, body):
    assert client.post("/runs/solve", json=body).status_code == 422


def test_inconsistent_tolerances_are_a_bad_request(client):
    body = {"case": "example2", **SMALL, "picard_tol": 1e-12, "solver_tol": 1e-10}
    response = client.post("/runs/solve", json=body)
    assert response.status_code == 400
    assert "picard_tol" in response.json()["detail"]


def test_solver_failure_is_a_server_error(client):
    body = {"case": "example2", **SMALL, "picard_max_iters": 1}
    response = client.post("/runs/solve", json=body)
    assert response.status_code == 500
    assert "Picard" in response.json()["detail"]


def test_converge(client):
    body = {"case": "example1", "uniform": True, "levels": [4, 8], "T": 0.25}
    response = client.post("/runs/converge", json=body)
    assert response.status_code == 200
    body = response.json()
    assert [r["nx"] for r in body["records"]] == [4, 8]
    assert body["records"][1]["rate_u"] is not None
    assert "rmac" in body["tables"]


def test_robust(client):
    body = {"case": "example1", "axis": "mu", "values": [1.0, 0.01], **SMALL}
    response = client.post("/runs/robust", json=body)
    assert response.status_code == 200
    assert [r["mu"] for r in response.json()["records"]] == [1.0, 0.01]


def test_conserve(client):
    response = client.post("/runs/conserve", json={"model": "stokes", "nx": 6, "dt": 0.5, "T": 1.0})
    assert response.status_code == 200
    body = response.json()
    assert body["conservation"]["model"] == "stokes"
    assert body["conservation"]["ok"] is True
    assert body["conservation"]["energy_law_checked"] is True
    assert body["record"] is None
