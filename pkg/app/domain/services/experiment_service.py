"""Experiment-level drivers shared by the CLI, the HTTP API and the link graph."""
from __future__ import annotations

import math
from logging import Logger
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.domain.models.bsm_models import BsmCircuit, HeraldedMemoryState
from app.domain.models.errors import LinkSimError
from app.domain.models.link_models import NodeSpec
from app.domain.models.scenario_models import ScenarioConfig
from app.domain.models.source_models import SourceCalibration
from app.domain.services.analysis_service import AnalysisService, dephase
from app.domain.services.bsm_service import BsmService
from app.domain.services.link_service import LinkService
from app.domain.services.memory_service import MemoryService
from app.domain.services.source_service import SourceService

# pair probability standing in for the g² → ∞ limit
VANISHING_PAIR_PROBABILITY = 1e-7
TOMOGRAPHY_COUNTS_PER_SETTING = 1000.0
LONG_STORAGE_NS = 1250.0


class ExperimentService:
    """Reproduces each analysis of the link experiment at model level."""

    def __init__(
        self,
        *,
        sources: SourceService,
        memory: MemoryService,
        bsm: BsmService,
        analysis: AnalysisService,
        link: LinkService,
        logger: Logger,
    ) -> None:
        self._sources = sources
        self._memory = memory
        self._bsm = bsm
        self._analysis = analysis
        self._link = link
        self._logger = logger

    # ------------------------------------------------------------------
    # calibration
    # ------------------------------------------------------------------
    def calibrate_node(self, node: NodeSpec, detector=None, target_g2: Optional[float] = None) -> Tuple[NodeSpec, SourceCalibration]:
        """Solve p for the node's g² target, then the visibility for its fidelity target."""
        target_g2 = target_g2 if target_g2 is not None else node.target_g2
        source = node.source
        if target_g2 is not None:
            if math.isinf(target_g2):
                p = VANISHING_PAIR_PROBABILITY
            else:
                p = self._sources.solve_pair_probability_for_g2(source, target_g2, detector)
            source = source.with_pair_probability(p)
        if node.target_fidelity is not None:
            calibration = self._sources.calibrate_visibility(
                source, node.target_fidelity, node=node.name, target_g2=target_g2, detector=detector
            )
            source = source.model_copy(update={"intrinsic_visibility": calibration.intrinsic_visibility})
        else:
            achieved = self._sources.postselected_source_rho(source, detector).fidelity
            calibration = SourceCalibration(
                node=node.name,
                target_g2=target_g2,
                pair_prob_per_pulse=source.pair_prob_per_pulse,
                intrinsic_visibility=source.intrinsic_visibility,
                achieved_fidelity=achieved,
            )
        return node.model_copy(update={"source": source}), calibration

    def calibrate_nodes(
        self, scenario: ScenarioConfig, target_g2: Optional[float] = None
    ) -> Tuple[NodeSpec, NodeSpec, List[SourceCalibration]]:
        node_a, calibration_a = self.calibrate_node(scenario.node_a(), scenario.analyzer_detector, target_g2)
        node_b, calibration_b = self.calibrate_node(scenario.node_b(), scenario.analyzer_detector, target_g2)
        return node_a, node_b, [calibration_a, calibration_b]

    def heralded_state(
        self,
        scenario: ScenarioConfig,
        node_a: NodeSpec,
        node_b: NodeSpec,
        *,
        fourfold: bool = True,
        circuit: Optional[BsmCircuit] = None,
    ) -> HeraldedMemoryState:
        return self._bsm.heralded_link_state(
            node_a,
            node_b,
            circuit or scenario.bsm_detectors,
            analyzer_detector=scenario.analyzer_detector,
            fourfold=fourfold,
            storage_time_ns=scenario.timing.storage_time_ns,
        )

    def calibrate_interference(
        self, scenario: ScenarioConfig, node_a: NodeSpec, node_b: NodeSpec
    ) -> Tuple[BsmCircuit, HeraldedMemoryState]:
        """BSM interference visibility that brings the heralded fidelity to its target.

        The heralded state is affine in the visibility, so one exact state with perfect
        interference fixes it in closed form. Without a target the scenario circuit is kept.
        """
        target = scenario.calibration.heralded_fidelity_target
        if target is None:
            return scenario.bsm_detectors, self.heralded_state(scenario, node_a, node_b)
        ideal = scenario.bsm_detectors.model_copy(update={"interference_visibility": 1.0})
        state = self.heralded_state(scenario, node_a, node_b, circuit=ideal)
        coherent = state.fidelity
        incoherent = self._analysis.fidelity_phi_plus(dephase(state.rho, 0.0))
        if coherent <= incoherent or not incoherent <= target <= coherent:
            raise LinkSimError(
                f"Heralded fidelity {target} is outside the interference range [{incoherent:.4f}, {coherent:.4f}]"
            )
        visibility = (target - incoherent) / (coherent - incoherent)
        rho = dephase(state.rho, visibility)
        fidelity = self._analysis.fidelity_phi_plus(rho)
        self._logger.info("Interference visibility %.4f for heralded fidelity %.4f", visibility, fidelity)
        calibrated = state.model_copy(update={"rho": rho, "fidelity": fidelity, "effective_fidelity": fidelity})
        return ideal.model_copy(update={"interference_visibility": visibility}), calibrated

    # ------------------------------------------------------------------
    # source
    # ------------------------------------------------------------------
    def source_sweep(self, scenario: ScenarioConfig, grid: Optional[Sequence[float]] = None) -> Tuple[List[str], List[List[Any]]]:
        """Singles, coincidence rate and g² against pump power."""
        grid = list(scenario.run.pump_grid if grid is None else grid)
        header = ["pump_power", "pair_prob_per_pulse", "singles_1_hz", "singles_2_hz", "coincidence_hz", "g2"]
        rows = []
        for power in grid:
            source = scenario.source_a.at_pump_power(power)
            stats = self._sources.g2_cross_correlation(source, scenario.analyzer_detector)
            rows.append(
                [power, source.pair_prob_per_pulse, stats.singles_rate_1_hz, stats.singles_rate_2_hz, stats.coincidence_rate_hz, stats.g2]
            )
        return header, rows

    def source_tomography(self, scenario: ScenarioConfig, counts_path: Optional[Path] = None) -> Dict[str, Any]:
        """Calibrated source states of both nodes, reconstructed by MLE from expected counts.

        With ``counts_path`` the measured records in that CSV are reconstructed as well.
        """
        node_a, node_b, calibrations = self.calibrate_nodes(scenario)
        report: Dict[str, Any] = {"calibrations": [c.model_dump() for c in calibrations], "nodes": {}}
        for node in (node_a, node_b):
            result = self._sources.postselected_source_rho(node.source, scenario.analyzer_detector)
            records = self._analysis.synthetic_records(result.rho, TOMOGRAPHY_COUNTS_PER_SETTING)
            mle = self._analysis.mle_tomography(records)
            report["nodes"][node.name] = {
                "fidelity": result.fidelity,
                "mle_fidelity": self._analysis.fidelity_phi_plus(mle.rho),
                "witness": self._analysis.witness_expectation(mle.rho),
                "pair_prob_per_pulse": node.source.pair_prob_per_pulse,
                "intrinsic_visibility": node.source.intrinsic_visibility,
                "rho": mle.rho.to_json_dict(),
            }
        if counts_path is not None:
            records = self._analysis.records_from_csv(counts_path)
            mle = self._analysis.mle_tomography(records)
            report["measured"] = {
                "counts_path": str(counts_path),
                "records": len(records),
                "mle_fidelity": self._analysis.fidelity_phi_plus(mle.rho),
                "witness": self._analysis.witness_expectation(mle.rho),
                "converged": mle.converged,
                "rho": mle.rho.to_json_dict(),
            }
        return report

    # ------------------------------------------------------------------
    # swapping without storage
    # ------------------------------------------------------------------
    def swap_g2_sweep(self, scenario: ScenarioConfig, g2_grid: Optional[Sequence[float]] = None) -> Tuple[List[str], List[List[Any]]]:
        """Heralded state against g², with the interference visibility fixed at the calibration point."""
        grid = list(scenario.run.g2_grid if g2_grid is None else g2_grid)
        header = ["g2", "pair_prob_per_pulse", "fidelity", "witness", "chsh_s", "herald_probability"]
        operating_points = [(g2, *self.calibrate_nodes(scenario, target_g2=g2)[:2]) for g2 in grid]
        if not operating_points:
            return header, []
        reference_a, reference_b, _ = self.calibrate_nodes(scenario)
        circuit, reference = self.calibrate_interference(scenario, reference_a, reference_b)
        rows = []
        for g2, node_a, node_b in operating_points:
            if g2 == scenario.calibration.target_g2:
                state = reference
            else:
                state = self.heralded_state(scenario, node_a, node_b, circuit=circuit)
            chsh = self._analysis.chsh_S(state.rho)
            rows.append(
                [
                    g2,
                    node_a.source.pair_prob_per_pulse,
                    state.fidelity,
                    self._analysis.witness_expectation(state.rho),
                    chsh.s_value,
                    state.herald_probability,
                ]
            )
            self._logger.info("g2=%s: heralded fidelity %.4f", g2, state.fidelity)
        return header, rows

    # ------------------------------------------------------------------
    # budget and sweeps
    # ------------------------------------------------------------------
    def budget_rows(self, scenario: ScenarioConfig) -> Tuple[List[str], List[List[Any]]]:
        """Every closed-form quantity next to its measured reference value."""
        report = self._link.budget_report(scenario.budget, scenario.timing, scenario.source_a, (scenario.memory_a, scenario.memory_b))
        long_timing = scenario.timing.model_copy(update={"storage_time_ns": LONG_STORAGE_NS})
        rows: List[List[Any]] = [
            ["heralding_margin_ns", report.heralding_margin_ns, 11.6],
            ["heralding_margin_1250ns_ns", self._link.heralding_margin(long_timing), 1206.0],
            ["edr_per_h", report.edr_per_h, 1.27],
            ["stored_edr_per_h", report.stored_edr_per_h, 106.0],
            ["accidental_per_h", report.accidental_per_h, 1.3e-7],
            ["accidental_probability_per_herald", report.accidental_probability_per_herald, 3.6e-13],
            ["heralding_probability", report.heralding_probability, 3.06e-6],
            ["four_photon_probability", report.four_photon_probability, 1.44e-4],
            ["pair_collection_efficiency", report.pair_collection_efficiency, 0.0064],
            ["memory_figure_of_merit_a", report.memory_figure_of_merit["A"], None],
            ["memory_figure_of_merit_b", report.memory_figure_of_merit["B"], None],
            ["single_photon_scheme_herald_ratio", report.single_photon_scheme["ratio"], 1500.0],
        ]
        references = {1: 0.275, 4: 1.1, 56: 15.4}
        for modes, rate in sorted(report.multiplexed_edr_per_h.items()):
            rows.append([f"edr_{modes}_modes_per_h", rate, references.get(modes)])
        projection_references = {"deterministic_sources": 1.7e8, "memory_efficiency_upgrade": 26.0, "repetition_rate_1ghz": 1.2e7}
        for projection in report.projections:
            value = projection.rate_per_h if projection.label == "repetition_rate_1ghz" else projection.factor
            rows.append([projection.label, value, projection_references[projection.label]])
        crossing = self._link.efficiency_at_fidelity(
            scenario.budget,
            reference_efficiencies=(scenario.memory_a.intrinsic_efficiency_at_ts, scenario.memory_b.intrinsic_efficiency_at_ts),
        )
        rows.append(["efficiency_at_fidelity_0.5", crossing, 1e-4])
        return ["quantity", "value", "reference"], rows

    def sweep(self, scenario: ScenarioConfig, axis: str) -> Tuple[List[str], List[List[Any]]]:
        if axis == "efficiency":
            grid = np.logspace(-6, 0, 61)
            curve = self._link.fidelity_vs_efficiency(
                scenario.budget,
                grid,
                (scenario.memory_a.intrinsic_efficiency_at_ts, scenario.memory_b.intrinsic_efficiency_at_ts),
            )
            return ["efficiency", "fidelity", "signal", "noise"], [
                [point.efficiency, point.fidelity, point.signal, point.noise] for point in curve
            ]
        if axis == "modes":
            budget = scenario.budget
            return ["modes", "edr_per_h"], [
                [modes, self._link.edr_multiplexed(budget.measured_edr_per_h, modes, budget.measured_modes)]
                for modes in scenario.run.mode_grid
            ]
        if axis == "storage-time":
            times = list(scenario.memory_a.storage_times()) + [LONG_STORAGE_NS]
            curve_a = self._memory.efficiency_curve(scenario.memory_a, times)
            curve_b = self._memory.efficiency_curve(scenario.memory_b, times)
            return ["t_ns", "efficiency_a", "efficiency_b"], [
                [t, eta_a, eta_b] for (t, eta_a), (_, eta_b) in zip(curve_a, curve_b)
            ]
        raise ValueError(f"Unknown sweep axis: {axis}")
