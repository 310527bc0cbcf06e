"""Middle-station Bell-state measurement and the heralded two-memory state."""
from __future__ import annotations

from logging import Logger
from typing import Dict, List, Optional, Tuple

from app.domain.models.bsm_models import (
    DETECTOR_LABELS,
    PHI_PLUS_RULE,
    PSI_PLUS_RULE,
    BsmCircuit,
    BsmSuccessProbabilities,
    HeraldedMemoryState,
    HeraldRule,
)
from app.domain.models.errors import ZeroProbabilityError
from app.domain.models.fock_models import (
    IDEAL_DETECTOR,
    MULTIPAIR_TRUNCATION,
    AnyFockState,
    DetectorBinding,
    LossChannel,
    MixedFockState,
    ModeKind,
    PolarizingBeamSplitter,
    ThresholdDetectorSpec,
    ThresholdMeasurement,
    Waveplate,
    path_modes,
)
from app.domain.models.link_models import NodeSpec
from app.domain.models.memory_models import TemporalModeRegister
from app.domain.services.analysis_service import AnalysisService, dephase, depolarize
from app.domain.services.fock_engine import FockEngine
from app.domain.services.memory_service import MemoryService
from app.domain.services.source_service import SourceService

NODE_PATHS = {"A": ("1", "2"), "B": ("4", "3")}
MEMORY_PATHS = (NODE_PATHS["A"][0], NODE_PATHS["B"][0])


class BsmService:
    """Runs the fusion circuit and conditions the memories on the herald."""

    def __init__(
        self,
        engine: FockEngine,
        sources: SourceService,
        memory: MemoryService,
        analysis: AnalysisService,
        logger: Logger,
    ) -> None:
        self._engine = engine
        self._sources = sources
        self._memory = memory
        self._analysis = analysis
        self._logger = logger

    # ------------------------------------------------------------------
    # circuit
    # ------------------------------------------------------------------
    def apply_circuit(self, state: AnyFockState, circuit: BsmCircuit, engine: Optional[FockEngine] = None) -> AnyFockState:
        engine = engine or self._engine
        for element, paths in circuit.stages():
            if isinstance(element, Waveplate):
                state = engine.apply_element(state, element, path_modes(paths[0]))
            elif isinstance(element, PolarizingBeamSplitter):
                state = engine.pbs(state, element.in_paths, element.out_paths)
        return state

    def run_bsm(
        self,
        state: AnyFockState,
        circuit: Optional[BsmCircuit] = None,
        seed: Optional[int] = None,
        *,
        engine: Optional[FockEngine] = None,
        keep_states: bool = True,
    ) -> ThresholdMeasurement:
        """Full fusion circuit followed by threshold detection on T1, R1, T2 and R2."""
        circuit = circuit or BsmCircuit()
        engine = engine or self._engine
        evolved = self.apply_circuit(state, circuit, engine)
        detectors = {
            label: DetectorBinding(modes=path_modes(label), spec=circuit.detector_for(label))
            for label in DETECTOR_LABELS
        }
        return engine.measure_threshold(evolved, detectors, seed, keep_states=keep_states)

    @staticmethod
    def herald_probability(measurement: ThresholdMeasurement, rule: HeraldRule = PHI_PLUS_RULE) -> float:
        return sum(measurement.probability(pattern) for pattern in rule.click_patterns())

    # ------------------------------------------------------------------
    # ideal accounting
    # ------------------------------------------------------------------
    def paired_sources_state(self, node_a: Optional[NodeSpec] = None, node_b: Optional[NodeSpec] = None) -> AnyFockState:
        """Product of two single-pair source outputs feeding memories 1 and 4 and BSM inputs 2 and 3."""
        node_a = node_a or NodeSpec(name="A")
        node_b = node_b or NodeSpec(name="B")
        state_a = self._sources.single_pair_state(_placed(node_a, "A").source)
        state_b = self._sources.single_pair_state(_placed(node_b, "B").source)
        return self._engine.tensor(state_a, state_b)

    def bsm_success_probability(
        self,
        state: Optional[AnyFockState] = None,
        circuit: Optional[BsmCircuit] = None,
        memory_paths: Tuple[str, str] = MEMORY_PATHS,
    ) -> BsmSuccessProbabilities:
        """Herald probabilities for Φ⁺ and Ψ⁺, raw and with one excitation left in each memory path."""
        state = state if state is not None else self.paired_sources_state()
        circuit = circuit or BsmCircuit(detector=IDEAL_DETECTOR)
        measurement = self.run_bsm(state, circuit)
        values: Dict[str, float] = {}
        for rule in (PHI_PLUS_RULE, PSI_PLUS_RULE):
            raw = 0.0
            useful = 0.0
            for pattern in rule.click_patterns():
                outcome = measurement.outcome(pattern)
                if outcome is None:
                    continue
                raw += outcome.probability
                useful += outcome.probability * self._one_excitation_mass(outcome.state, memory_paths)
            values[f"{rule.outcome}_raw"] = raw
            values[f"{rule.outcome}_useful"] = useful
        return BsmSuccessProbabilities(**values)

    def _one_excitation_mass(self, state: Optional[MixedFockState], paths: Tuple[str, str], kind: Optional[ModeKind] = None) -> float:
        if state is None:
            return 0.0
        try:
            return self._engine.project_and_trace(state, paths, kind).postselected_mass
        except ZeroProbabilityError:
            return 0.0

    # ------------------------------------------------------------------
    # heralded state
    # ------------------------------------------------------------------
    def heralded_memory_state(
        self,
        measurement: ThresholdMeasurement,
        rule: HeraldRule = PHI_PLUS_RULE,
        *,
        fourfold: bool = True,
        memory_paths: Tuple[str, str] = MEMORY_PATHS,
        kind: Optional[ModeKind] = None,
    ) -> HeraldedMemoryState:
        """Memory state conditioned on the herald.

        ``rho`` is always the projection onto one excitation per memory. Without fourfold
        post-selection the herald also admits branches with an empty or doubly filled
        memory; those have no two-qubit description, so they enter only through
        ``spurious_fraction`` (their share of the heralded mass) and
        ``effective_fidelity`` = (1 − spurious_fraction)·F.
        """
        branches: List[Tuple[float, object]] = []
        pattern_fidelities: Dict[str, float] = {}
        herald = 0.0
        for pattern in rule.click_patterns():
            outcome = measurement.outcome(pattern)
            if outcome is None or outcome.state is None:
                continue
            herald += outcome.probability
            branches.extend((outcome.probability * weight, branch) for weight, branch in outcome.state.branches)
            try:
                projection = self._engine.project_and_trace(outcome.state, memory_paths, kind)
                pattern_fidelities[pattern.label()] = self._analysis.fidelity_phi_plus(projection.rho)
            except ZeroProbabilityError:
                pattern_fidelities[pattern.label()] = 0.0
        if herald <= 0.0:
            raise ZeroProbabilityError(f"Herald {rule.outcome} has zero probability")
        combined, _ = MixedFockState.from_weighted(branches)
        projection = self._engine.project_and_trace(combined, memory_paths, kind)
        fidelity = self._analysis.fidelity_phi_plus(projection.rho)
        kept = projection.postselected_mass
        return HeraldedMemoryState(
            rho=projection.rho,
            herald_probability=herald,
            fourfold=fourfold,
            spurious_fraction=0.0 if fourfold else min(max(1.0 - kept, 0.0), 1.0),
            fidelity=fidelity,
            effective_fidelity=fidelity if fourfold else kept * fidelity,
            pattern_fidelities=pattern_fidelities,
        )

    def heralded_link_state(
        self,
        node_a: NodeSpec,
        node_b: NodeSpec,
        circuit: Optional[BsmCircuit] = None,
        *,
        analyzer_detector: Optional[ThresholdDetectorSpec] = None,
        fourfold: bool = True,
        visibilities: Optional[Tuple[float, float]] = None,
        storage_time_ns: Optional[float] = None,
    ) -> HeraldedMemoryState:
        """Exact heralded state of two multi-pair sources, two memories and the BSM.

        Memory retrieval after ``storage_time_ns`` (default: each comb storage time) and
        collection losses ahead of the analyzers rescale the analyzer detector efficiency;
        unequal collection ahead of the BSM is applied as a loss on the better arm. Source
        visibilities depolarize each memory qubit and the circuit's interference
        visibility dephases the pair.
        """
        circuit = circuit or BsmCircuit()
        analyzer_detector = analyzer_detector or ThresholdDetectorSpec()
        node_a, node_b = _placed(node_a, "A"), _placed(node_b, "B")
        if visibilities is None:
            visibilities = (node_a.source.intrinsic_visibility, node_b.source.intrinsic_visibility)
        engine = self._engine.with_truncation(MULTIPAIR_TRUNCATION)

        joint = engine.tensor(self._sources.emit(node_a.source), self._sources.emit(node_b.source), drop_excess=True)
        joint = joint.normalized()

        registers = {name: TemporalModeRegister() for name in NODE_PATHS}
        slots = {}
        mixed: AnyFockState = joint
        for node in (node_a, node_b):
            memory_path = NODE_PATHS[node.name][0]
            mixed = self._memory.absorb(mixed, memory_path, registers[node.name], 0)
            slots[node.name] = registers[node.name].get(0)

        collection = {
            node.name: node.source.heralding_efficiency * node.transmission_to_bsm for node in (node_a, node_b)
        }
        common = min(collection.values())
        for name, value in collection.items():
            if common > 0 and value > common * (1 + 1e-12):
                mixed = engine.apply_element(mixed, LossChannel(transmission=common / value), path_modes(NODE_PATHS[name][1]))
        circuit = circuit.with_detector(circuit.detector.scaled(common)).model_copy(
            update={"detector_overrides": {label: spec.scaled(common) for label, spec in circuit.detector_overrides.items()}}
        )

        measurement = self.run_bsm(mixed, circuit, engine=engine)
        memory_modes = tuple(slot.absorbed_modes[0].path for slot in slots.values())
        exact = self.heralded_memory_state(measurement, fourfold=fourfold, memory_paths=memory_modes, kind=ModeKind.MEMORY)
        self._logger.debug("Herald probability %.3e, raw fidelity %.4f", exact.herald_probability, exact.fidelity)

        if not fourfold:
            rho = dephase(depolarize(exact.rho, *visibilities), circuit.interference_visibility)
            fidelity = self._analysis.fidelity_phi_plus(rho)
            return exact.model_copy(
                update={"rho": rho, "fidelity": fidelity, "effective_fidelity": (1 - exact.spurious_fraction) * fidelity}
            )

        heralded_branches = []
        for pattern in PHI_PLUS_RULE.click_patterns():
            outcome = measurement.outcome(pattern)
            if outcome is not None and outcome.state is not None:
                heralded_branches.extend((outcome.probability * w, b) for w, b in outcome.state.branches)
        heralded, _ = MixedFockState.from_weighted(heralded_branches)
        for name, slot in slots.items():
            heralded = self._memory.release(heralded, slot)
        analyzers = tuple(
            analyzer_detector.scaled(
                node.source.heralding_efficiency
                * self._memory.retrieval_transmission(
                    node.memory,
                    node.memory.storage_time_ns if storage_time_ns is None else storage_time_ns,
                    analyzer_detector.efficiency,
                )
            )
            for node in (node_a, node_b)
        )
        rho, coincidence = self._analysis.analyzer_density_matrix(engine, heralded, MEMORY_PATHS, analyzers)
        rho = dephase(depolarize(rho, *visibilities), circuit.interference_visibility)
        fidelity = self._analysis.fidelity_phi_plus(rho)
        return HeraldedMemoryState(
            rho=rho,
            herald_probability=exact.herald_probability,
            fourfold=True,
            spurious_fraction=0.0,
            fidelity=fidelity,
            effective_fidelity=fidelity,
            coincidence_probability=coincidence,
            pattern_fidelities=exact.pattern_fidelities,
        )


def _placed(node: NodeSpec, role: str) -> NodeSpec:
    """Pin a node's source outputs to the station layout (A: 1/2, B: 4/3)."""
    memory_path, bsm_path = NODE_PATHS[role]
    source = node.source.model_copy(update={"memory_path": memory_path, "bsm_path": bsm_path})
    return node.model_copy(update={"name": role, "source": source})
