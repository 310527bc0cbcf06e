"""Tests for the LangGraph link workflow."""
from __future__ import annotations

import logging

import pytest

from app.domain.models.scenario_models import ScenarioConfig
from app.domain.services.experiment_service import ExperimentService
from app.domain.services.link_service import LinkService
from app.domain.services.source_service import SourceService
from app.infrastructure.langgraph.graph_builder import LinkExperimentGraph


@pytest.fixture(scope="module")
def graph(
    experiments: ExperimentService, sources: SourceService, link: LinkService, logger: logging.Logger
) -> LinkExperimentGraph:
    return LinkExperimentGraph(experiments=experiments, sources=sources, link=link, logger=logger)


@pytest.mark.slow
def test_link_pipeline_produces_report(graph: LinkExperimentGraph, scenario: ScenarioConfig) -> None:
    final = graph.run(scenario, cycles=300, seed=11)
    report = final["report"]
    assert set(report) >= {"calibrations", "exact", "analytic", "monte_carlo", "source", "physics"}
    assert 0.0 < report["exact"]["interference_visibility"] < 1.0
    assert report["exact"]["fidelity"] == pytest.approx(scenario.calibration.heralded_fidelity_target, abs=1e-6)
    assert report["physics"]["modes"] == report["monte_carlo"]["modes"] == 4
    assert report["seed"] == 11
    assert report["monte_carlo"]["cycles"] == 300
    assert report["analytic"]["edr_per_h"] == pytest.approx(1.2726, rel=1e-4)
    assert final["events"].is_ordered()
    assert final["pair_statistics"].g2 == pytest.approx(50.0, rel=1e-2)


@pytest.mark.slow
def test_negative_margin_fails_every_cycle(graph: LinkExperimentGraph, scenario: ScenarioConfig) -> None:
    short = scenario.model_copy(update={"timing": scenario.timing.model_copy(update={"storage_time_ns": 40.0})})
    final = graph.run(short, cycles=20)
    assert final["monte_carlo"].failed_cycles == 20
    assert final["monte_carlo"].heralds == 0
