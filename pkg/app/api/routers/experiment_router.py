"""Experiment API routes mirroring the command-line subcommands."""
from __future__ import annotations

from pathlib import Path
from typing import Any, Callable, Dict, List, Sequence

from fastapi import APIRouter, HTTPException, status

from app.domain.models.errors import LinkSimError, ScenarioError
from app.domain.models.request_models import (
    ExperimentRequest,
    SourceRequest,
    SwapRequest,
    SweepRequest,
    TableResponse,
)
from app.domain.models.scenario_models import ScenarioConfig
from app.domain.services.experiment_service import ExperimentService
from app.domain.services.scenario_service import ScenarioService
from app.infrastructure.langgraph.graph_builder import LinkExperimentGraph
from app.utils.file_utils import config_hash
from app.utils.logger import get_logger


def build_experiment_router(
    *,
    scenarios: ScenarioService,
    experiments: ExperimentService,
    graph: LinkExperimentGraph,
    default_scenario: Path,
) -> APIRouter:
    """Create and return the experiment router with injected dependencies."""
    router = APIRouter(prefix="/experiments", tags=["experiments"])
    logger = get_logger(__name__)

    def resolve(payload: ExperimentRequest) -> ScenarioConfig:
        scenario = scenarios.parse(payload.scenario) if payload.scenario is not None else scenarios.load(default_scenario)
        return scenarios.with_run_overrides(scenario, seed=payload.seed, cycles=payload.cycles, jobs=payload.jobs)

    def guarded(action: Callable[[], Any]) -> Any:
        try:
            return action()
        except ScenarioError as exc:
            raise HTTPException(
                status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
                detail={"message": str(exc), "key_paths": exc.key_paths},
            ) from exc
        except LinkSimError as exc:
            raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(exc)) from exc
        except HTTPException:
            raise
        except Exception as exc:
            logger.exception("Unexpected experiment failure")
            raise HTTPException(status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, detail="Internal error") from exc

    def table(scenario: ScenarioConfig, header: Sequence[str], rows: List[List[Any]]) -> TableResponse:
        provenance = {"config_hash": config_hash(scenario.model_dump(mode="json")), "seed": scenario.run.seed}
        return TableResponse(header=list(header), rows=rows, provenance=provenance)

    @router.post("/budget", response_model=TableResponse)
    def budget(payload: ExperimentRequest) -> TableResponse:
        def action() -> TableResponse:
            scenario = resolve(payload)
            return table(scenario, *experiments.budget_rows(scenario))

        return guarded(action)

    @router.post("/source")
    def source(payload: SourceRequest) -> Dict[str, Any]:
        def action() -> Dict[str, Any]:
            scenario = resolve(payload)
            if payload.mode == "tomography":
                return experiments.source_tomography(scenario)
            return table(scenario, *experiments.source_sweep(scenario, payload.pump_grid)).model_dump()

        return guarded(action)

    @router.post("/swap", response_model=TableResponse)
    def swap(payload: SwapRequest) -> TableResponse:
        def action() -> TableResponse:
            scenario = resolve(payload)
            return table(scenario, *experiments.swap_g2_sweep(scenario, payload.g2_grid))

        return guarded(action)

    @router.post("/sweep", response_model=TableResponse)
    def sweep(payload: SweepRequest) -> TableResponse:
        def action() -> TableResponse:
            scenario = resolve(payload)
            return table(scenario, *experiments.sweep(scenario, payload.axis))

        return guarded(action)

    @router.post("/link")
    def link(payload: ExperimentRequest) -> Dict[str, Any]:
        def action() -> Dict[str, Any]:
            scenario = resolve(payload)
            logger.info("Running link experiment for scenario %s", scenario.name)
            final = graph.run(scenario)
            return final["report"]

        return guarded(action)

    return router
