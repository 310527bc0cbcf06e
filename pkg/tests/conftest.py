"""Shared service fixtures wired the same way as the application container."""
from __future__ import annotations

import logging

import pytest

from app.domain.models.scenario_models import ScenarioConfig
from app.domain.services.analysis_service import AnalysisService
from app.domain.services.bsm_service import BsmService
from app.domain.services.experiment_service import ExperimentService
from app.domain.services.fock_engine import FockEngine
from app.domain.services.link_service import LinkService
from app.domain.services.memory_service import MemoryService
from app.domain.services.scenario_service import ScenarioService
from app.domain.services.source_service import SourceService


@pytest.fixture(scope="session")
def logger() -> logging.Logger:
    return logging.getLogger("linksim.tests")


@pytest.fixture(scope="session")
def engine(logger: logging.Logger) -> FockEngine:
    return FockEngine(logger)


@pytest.fixture(scope="session")
def analysis(logger: logging.Logger) -> AnalysisService:
    return AnalysisService(logger)


@pytest.fixture(scope="session")
def sources(engine: FockEngine, analysis: AnalysisService, logger: logging.Logger) -> SourceService:
    return SourceService(engine, analysis, logger)


@pytest.fixture(scope="session")
def memory(engine: FockEngine, logger: logging.Logger) -> MemoryService:
    return MemoryService(engine, logger)


@pytest.fixture(scope="session")
def bsm(
    engine: FockEngine,
    sources: SourceService,
    memory: MemoryService,
    analysis: AnalysisService,
    logger: logging.Logger,
) -> BsmService:
    return BsmService(engine, sources, memory, analysis, logger)


@pytest.fixture(scope="session")
def link(memory: MemoryService, logger: logging.Logger) -> LinkService:
    return LinkService(memory, logger, chunk_cycles=500)


@pytest.fixture(scope="session")
def scenarios(logger: logging.Logger) -> ScenarioService:
    return ScenarioService(logger)


@pytest.fixture(scope="session")
def experiments(
    sources: SourceService,
    memory: MemoryService,
    bsm: BsmService,
    analysis: AnalysisService,
    link: LinkService,
    logger: logging.Logger,
) -> ExperimentService:
    return ExperimentService(sources=sources, memory=memory, bsm=bsm, analysis=analysis, link=link, logger=logger)


@pytest.fixture()
def scenario() -> ScenarioConfig:
    return ScenarioConfig()
