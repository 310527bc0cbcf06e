"""FastAPI application entrypoint."""
from __future__ import annotations

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from app.api.routers.experiment_router import build_experiment_router
from app.config.settings import Settings, get_settings
from app.domain.services.analysis_service import AnalysisService
from app.domain.services.bsm_service import BsmService
from app.domain.services.experiment_service import ExperimentService
from app.domain.services.fock_engine import FockEngine
from app.domain.services.link_service import LinkService
from app.domain.services.memory_service import MemoryService
from app.domain.services.scenario_service import ScenarioService
from app.domain.services.source_service import SourceService
from app.infrastructure.langgraph.graph_builder import LinkExperimentGraph
from app.utils.logger import configure_logger


class ServiceContainer:
    """Centralized dependency container used for manual DI."""

    def __init__(self, settings: Settings) -> None:
        self.settings = settings
        self.logger = configure_logger(level=settings.resolve_log_level())

        self.engine = FockEngine(self.logger)
        self.analysis_service = AnalysisService(
            self.logger,
            tolerance=settings.channel_tolerance,
            max_iterations=settings.mle_max_iterations,
        )
        self.source_service = SourceService(self.engine, self.analysis_service, self.logger)
        self.memory_service = MemoryService(self.engine, self.logger)
        self.bsm_service = BsmService(
            self.engine, self.source_service, self.memory_service, self.analysis_service, self.logger
        )
        self.link_service = LinkService(
            self.memory_service, self.logger, chunk_cycles=settings.chunk_cycles, max_jobs=settings.max_jobs
        )
        self.scenario_service = ScenarioService(self.logger)
        self.experiment_service = ExperimentService(
            sources=self.source_service,
            memory=self.memory_service,
            bsm=self.bsm_service,
            analysis=self.analysis_service,
            link=self.link_service,
            logger=self.logger,
        )
        self.graph = LinkExperimentGraph(
            experiments=self.experiment_service,
            sources=self.source_service,
            link=self.link_service,
            logger=self.logger,
        )


def create_app(settings: Settings | None = None) -> FastAPI:
    """Instantiate and configure the FastAPI application."""
    settings = settings or get_settings()
    container = ServiceContainer(settings)

    application = FastAPI(title=settings.app_name)
    application.add_middleware(
        CORSMiddleware,
        allow_origins=settings.cors_allowed_origins,
        allow_credentials=True,
        allow_methods=["*"],
        allow_headers=["*"],
    )
    application.include_router(
        build_experiment_router(
            scenarios=container.scenario_service,
            experiments=container.experiment_service,
            graph=container.graph,
            default_scenario=settings.resolve_scenario_path(),
        )
    )
    return application


app = create_app()
