"""Tests for scenario loading, validation and run overrides."""
from __future__ import annotations

import json
from pathlib import Path

import pytest

from app.config.settings import bundled_scenario_path
from app.domain.models.errors import ScenarioError
from app.domain.models.link_models import DutyCycleSpec
from app.domain.models.scenario_models import ScenarioConfig
from app.domain.services.scenario_service import ScenarioService


def test_bundled_scenario_matches_model_defaults(scenarios: ScenarioService) -> None:
    assert scenarios.load(bundled_scenario_path()) == ScenarioConfig()


def test_dump_then_parse_keeps_the_scenario(scenarios: ScenarioService, scenario: ScenarioConfig) -> None:
    assert scenarios.parse(scenarios.dump(scenario)) == scenario


def test_nodes_carry_sources_and_memories(scenario: ScenarioConfig) -> None:
    node_a, node_b = scenario.node_a(), scenario.node_b()
    assert (node_a.source.memory_path, node_a.source.bsm_path) == ("1", "2")
    assert (node_b.source.memory_path, node_b.source.bsm_path) == ("4", "3")
    assert node_b.memory.intrinsic_efficiency_at_ts == pytest.approx(0.125)


def test_unknown_key_is_reported_with_its_path(scenarios: ScenarioService, scenario: ScenarioConfig) -> None:
    payload = scenarios.dump(scenario)
    payload["memory_a"]["decay"]["tau3_ns"] = 10.0
    with pytest.raises(ScenarioError) as caught:
        scenarios.parse(payload)
    assert "memory_a.decay.tau3_ns" in caught.value.key_paths


def test_out_of_range_value_is_reported_with_its_path(scenarios: ScenarioService, scenario: ScenarioConfig) -> None:
    payload = scenarios.dump(scenario)
    payload["source_a"]["pair_prob_per_pulse"] = 0.5
    with pytest.raises(ScenarioError) as caught:
        scenarios.parse(payload)
    assert caught.value.key_paths == ["source_a.pair_prob_per_pulse"]


def test_unsupported_schema_version(scenarios: ScenarioService, scenario: ScenarioConfig) -> None:
    payload = {**scenarios.dump(scenario), "schema_version": 2}
    with pytest.raises(ScenarioError):
        scenarios.parse(payload)


def test_missing_and_malformed_files(scenarios: ScenarioService, tmp_path: Path) -> None:
    with pytest.raises(ScenarioError, match="not found"):
        scenarios.load(tmp_path / "absent.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{ not json", encoding="utf-8")
    with pytest.raises(ScenarioError, match="not valid JSON"):
        scenarios.load(broken)


def test_partial_scenario_fills_defaults(scenarios: ScenarioService, tmp_path: Path) -> None:
    path = tmp_path / "short-storage.json"
    path.write_text(json.dumps({"name": "short-storage", "timing": {"storage_time_ns": 40.0}}), encoding="utf-8")
    loaded = scenarios.load(path)
    assert loaded.name == "short-storage"
    assert loaded.timing.storage_time_ns == pytest.approx(40.0)
    assert loaded.budget == ScenarioConfig().budget


def test_run_overrides(scenarios: ScenarioService, scenario: ScenarioConfig) -> None:
    assert scenarios.with_run_overrides(scenario) is scenario
    updated = scenarios.with_run_overrides(scenario, seed=7, cycles=100, jobs=2)
    assert (updated.run.seed, updated.run.cycles, updated.run.jobs) == (7, 100, 2)
    assert updated.run.modes == scenario.run.modes


def test_invalid_run_override_names_the_key(scenarios: ScenarioService, scenario: ScenarioConfig) -> None:
    with pytest.raises(ScenarioError) as caught:
        scenarios.with_run_overrides(scenario, cycles=0)
    assert caught.value.key_paths == ["run.cycles"]


def test_duty_cycle_phases_must_fill_the_period() -> None:
    assert DutyCycleSpec().duty_fraction == pytest.approx(0.5)
    with pytest.raises(ValueError):
        DutyCycleSpec(cycle_rate_hz=200.0)
