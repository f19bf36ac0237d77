try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import pytest
from fastapi.testclient import TestClient

from app.settings import OUTPUT_ROOT_ENV
from main import app

from conftest import HALFWIDTH, OMEGA, R_INNER, R_OUTER, SIGMA, scenario_toml


@pytest.fixture
def client(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "runs"))
    return TestClient(app)


def test_root_and_health(client):
    assert client.get("/").json() == {"message": "Annulus MHD Control Lab API"}
    health = client.get("/api/health")
    assert health.status_code == 200
    assert health.json()["status"] == "healthy"


def test_catalog_and_modes(client):
    ids = [entry["id"] for entry in client.get("/api/catalog").json()["fields"]]
    assert "sector_bump" in ids
    modes = [entry["id"] for entry in client.get("/api/modes").json()["modes"]]
    assert modes == ["flush-demo", "return-method", "full-null-control", "full-two-point", "verify-only"]


def test_calibrate(client):
    body = {
        "geometry": {"r_inner": R_INNER, "r_outer": R_OUTER, "n_radial": 12, "n_angular": 32},
        "layout": {"omega": list(OMEGA), "sigma_angle": SIGMA, "lambda_halfwidth": HALFWIDTH},
        "solver": {"samples_per_period": 2, "rk_substeps": 2},
    }
    response = client.post("/api/calibrate", json=body)
    assert response.status_code == 200, response.text
    summary = response.json()
    assert summary["K"] >= 2
    assert summary["d_lambda"] > 0.0
    assert summary["flushing_passed"] is True


def test_calibrate_rejects_unknown_fields(client):
    response = client.post("/api/calibrate", json={"geometry": {"radius": 2.0}})
    assert response.status_code == 422


def test_run_reports_key_path(client):
    response = client.post("/api/run", json={"solver": {"max_iters": 0}})
    assert response.status_code == 422
    assert response.json()["detail"]["key_path"] == "solver.max_iters"


def test_run_then_verify(client, tmp_path):
    body = tomllib.loads(scenario_toml("api", "flush-demo"))
    response = client.post("/api/run", json=body)
    assert response.status_code == 200, response.text
    result = response.json()
    assert result["passed"] is True
    assert result["path"].startswith(str(tmp_path / "runs"))

    checked = client.post("/api/verify", json={"bundle": result["path"]})
    assert checked.status_code == 200, checked.text
    assert len(checked.json()["criteria"]) == 11


def test_verify_missing_bundle(client, tmp_path):
    response = client.post("/api/verify", json={"bundle": str(tmp_path / "nowhere")})
    assert response.status_code == 400
