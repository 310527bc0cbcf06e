"""LangGraph workflow running the elementary-link experiment end to end."""
from __future__ import annotations

from logging import Logger
from typing import Any, Dict, List, Optional, TypedDict

from langgraph.graph import END, START, StateGraph

from app.domain.models.bsm_models import BsmCircuit, HeraldedMemoryState
from app.domain.models.link_models import EventLog, LinkPhysics, MonteCarloReport, NodeSpec, RateBudgetReport
from app.domain.models.scenario_models import ScenarioConfig
from app.domain.models.source_models import PairStatistics, SourceCalibration
from app.domain.services.experiment_service import ExperimentService
from app.domain.services.link_service import LinkService
from app.domain.services.source_service import SourceService


class LinkState(TypedDict, total=False):
    """Typed state shared across LangGraph nodes."""

    scenario: ScenarioConfig
    seed: int
    cycles: int
    jobs: int
    node_a: NodeSpec
    node_b: NodeSpec
    calibrations: List[SourceCalibration]
    pair_statistics: PairStatistics
    bsm_circuit: BsmCircuit
    heralded: HeraldedMemoryState
    budget: RateBudgetReport
    physics: LinkPhysics
    monte_carlo: MonteCarloReport
    events: EventLog
    report: Dict[str, Any]


class LinkExperimentGraph:
    """Builds a LangGraph pipeline from source calibration to the final link report."""

    def __init__(
        self,
        *,
        experiments: ExperimentService,
        sources: SourceService,
        link: LinkService,
        logger: Logger,
    ) -> None:
        self._experiments = experiments
        self._sources = sources
        self._link = link
        self._logger = logger

        builder = StateGraph(LinkState)
        builder.add_node("calibrate_sources", self._calibrate_sources_node)
        builder.add_node("solve_operating_point", self._solve_operating_point_node)
        builder.add_node("exact_heralded_state", self._exact_heralded_state_node)
        builder.add_node("budget", self._budget_node)
        builder.add_node("monte_carlo", self._monte_carlo_node)
        builder.add_node("report", self._report_node)

        builder.add_edge(START, "calibrate_sources")
        builder.add_edge("calibrate_sources", "solve_operating_point")
        builder.add_edge("solve_operating_point", "exact_heralded_state")
        builder.add_edge("exact_heralded_state", "budget")
        builder.add_edge("budget", "monte_carlo")
        builder.add_edge("monte_carlo", "report")
        builder.add_edge("report", END)

        self._graph = builder.compile()

    def run(
        self,
        scenario: ScenarioConfig,
        *,
        seed: Optional[int] = None,
        cycles: Optional[int] = None,
        jobs: Optional[int] = None,
    ) -> LinkState:
        """Execute the pipeline and return the final state (report, Monte Carlo and event log)."""
        state: LinkState = {
            "scenario": scenario,
            "seed": scenario.run.seed if seed is None else seed,
            "cycles": scenario.run.cycles if cycles is None else cycles,
            "jobs": scenario.run.jobs if jobs is None else jobs,
        }
        self._logger.info("Executing link pipeline for scenario %s", scenario.name)
        return self._graph.invoke(state)

    def _calibrate_sources_node(self, state: LinkState) -> LinkState:
        """Solve each node's pair probability and visibility."""
        node_a, node_b, calibrations = self._experiments.calibrate_nodes(state["scenario"])
        state["node_a"], state["node_b"], state["calibrations"] = node_a, node_b, calibrations
        self._logger.debug("Calibrated p_A=%.5f p_B=%.5f", node_a.source.pair_prob_per_pulse, node_b.source.pair_prob_per_pulse)
        return state

    def _solve_operating_point_node(self, state: LinkState) -> LinkState:
        """Pair statistics at the calibrated operating point of node A."""
        scenario = state["scenario"]
        state["pair_statistics"] = self._sources.g2_cross_correlation(state["node_a"].source, scenario.analyzer_detector)
        margin = self._link.heralding_margin(scenario.timing)
        if margin < 0:
            self._logger.warning("Heralding margin is negative (%.1f ns); every cycle will fail", margin)
        return state

    def _exact_heralded_state_node(self, state: LinkState) -> LinkState:
        """Exact heralded state with the BSM interference calibrated to the heralded target."""
        state["bsm_circuit"], state["heralded"] = self._experiments.calibrate_interference(
            state["scenario"], state["node_a"], state["node_b"]
        )
        self._logger.debug("Exact heralded fidelity %.4f", state["heralded"].fidelity)
        return state

    def _budget_node(self, state: LinkState) -> LinkState:
        scenario = state["scenario"]
        state["budget"] = self._link.budget_report(
            scenario.budget, scenario.timing, state["node_a"].source, (scenario.memory_a, scenario.memory_b)
        )
        return state

    def _monte_carlo_node(self, state: LinkState) -> LinkState:
        """Sample the link from the exact herald probability, η(t) and the analyzer detectors."""
        scenario = state["scenario"]
        repetition_rate_hz = scenario.source_a.repetition_rate_hz
        state["physics"] = self._link.link_physics(
            state["heralded"],
            state["node_a"],
            state["node_b"],
            scenario.analyzer_detector,
            scenario.timing,
            repetition_rate_hz=repetition_rate_hz,
            modes=scenario.run.modes,
        )
        report, events = self._link.run_link_monte_carlo(
            state["heralded"].rho,
            state["physics"],
            scenario.timing,
            scenario.duty,
            state["pair_statistics"],
            repetition_rate_hz=repetition_rate_hz,
            cycles=state["cycles"],
            seed=state["seed"],
            jobs=state["jobs"],
            importance_boost=scenario.run.importance_boost,
            log_cycles=scenario.run.log_cycles,
        )
        state["monte_carlo"], state["events"] = report, events
        return state

    def _report_node(self, state: LinkState) -> LinkState:
        heralded, budget, monte_carlo = state["heralded"], state["budget"], state["monte_carlo"]
        state["report"] = {
            "scenario": state["scenario"].name,
            "seed": state["seed"],
            "calibrations": [c.model_dump(mode="json") for c in state["calibrations"]],
            "exact": {
                "fidelity": heralded.fidelity,
                "witness": 0.5 - heralded.fidelity,
                "herald_probability": heralded.herald_probability,
                "coincidence_probability": heralded.coincidence_probability,
                "interference_visibility": state["bsm_circuit"].interference_visibility,
                "rho": heralded.rho.to_json_dict(),
            },
            "analytic": {
                "heralding_margin_ns": budget.heralding_margin_ns,
                "edr_per_h": budget.edr_per_h,
                "accidental_per_h": budget.accidental_per_h,
                "heralding_probability": budget.heralding_probability,
            },
            "physics": state["physics"].model_dump(mode="json"),
            "monte_carlo": monte_carlo.model_dump(mode="json"),
            "source": state["pair_statistics"].model_dump(mode="json"),
        }
        return state
