"""HTTP tests for the experiment routes."""
from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from app.config.settings import Settings
from app.main import create_app


@pytest.fixture(scope="module")
def client() -> TestClient:
    return TestClient(create_app(Settings(scenario_path=None, log_level="WARNING")))


def test_budget_route_returns_table(client: TestClient) -> None:
    response = client.post("/experiments/budget", json={})
    assert response.status_code == 200
    body = response.json()
    assert body["header"] == ["quantity", "value", "reference"]
    assert body["provenance"]["seed"] == 2021
    margin = next(row for row in body["rows"] if row[0] == "heralding_margin_ns")
    assert margin[1] == pytest.approx(11.6)


def test_inline_scenario_and_seed_override(client: TestClient) -> None:
    response = client.post(
        "/experiments/sweep",
        json={"axis": "modes", "seed": 3, "scenario": {"run": {"mode_grid": [1, 56]}}},
    )
    assert response.status_code == 200
    body = response.json()
    assert [row[0] for row in body["rows"]] == [1, 56]
    assert body["provenance"]["seed"] == 3


def test_invalid_scenario_reports_key_paths(client: TestClient) -> None:
    response = client.post("/experiments/budget", json={"scenario": {"timing": {"storage_time_ns": -5}}})
    assert response.status_code == 422
    assert response.json()["detail"]["key_paths"] == ["timing.storage_time_ns"]


def test_unknown_axis_is_rejected_by_request_model(client: TestClient) -> None:
    response = client.post("/experiments/sweep", json={"axis": "pressure"})
    assert response.status_code == 422


def test_source_sweep_with_custom_grid(client: TestClient) -> None:
    response = client.post("/experiments/source", json={"pump_grid": [0.002, 0.02]})
    assert response.status_code == 200
    rows = response.json()["rows"]
    assert len(rows) == 2
    assert rows[0][-1] > rows[1][-1]


def test_unreachable_g2_maps_to_bad_request(client: TestClient) -> None:
    response = client.post("/experiments/swap", json={"g2_grid": [1.0001]})
    assert response.status_code == 400


@pytest.mark.slow
def test_link_route_runs_the_pipeline(client: TestClient) -> None:
    response = client.post("/experiments/link", json={"cycles": 200})
    assert response.status_code == 200
    report = response.json()
    assert report["monte_carlo"]["cycles"] == 200
    assert report["analytic"]["heralding_margin_ns"] == pytest.approx(11.6)
    assert 0.25 < report["exact"]["fidelity"] <= 1.0
