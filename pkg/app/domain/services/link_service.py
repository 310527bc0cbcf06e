"""Closed-form link budget and the seeded Monte Carlo of the elementary link."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from logging import Logger
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.domain.models.analysis_models import TwoQubitDensityMatrix
from app.domain.models.bsm_models import HeraldedMemoryState
from app.domain.models.errors import LinkSimError
from app.domain.models.fock_models import ThresholdDetectorSpec
from app.domain.models.link_models import (
    DutyCycleSpec,
    EdrProjection,
    Estimate,
    EventKind,
    EventLog,
    FidelityCurvePoint,
    LinkPhysics,
    LinkTimingSpec,
    MonteCarloReport,
    NodeSpec,
    RateBudget,
    RateBudgetReport,
)
from app.domain.models.memory_models import MemorySpec, TemporalModeRegister
from app.domain.models.source_models import PairStatistics, SpdcSourceSpec
from app.domain.services.analysis_service import KETS, PAULI_BASES
from app.domain.services.bsm_service import MEMORY_PATHS
from app.domain.services.memory_service import MemoryService

SECONDS_PER_HOUR = 3600.0
# reference points for the EDR projections
SINGLE_PHOTON_SCHEME_HERALD_HZ = 1.5e5
MEASURED_REPETITION_HZ = 7.6e7
PROJECTED_REPETITION_HZ = 1.0e9
PROJECTED_EDR_PER_H = 9.0e5
UPGRADED_MEMORY_EFFICIENCY = 0.69


class MonteCarloPlan(BaseModel):
    """Everything one Monte Carlo chunk needs; picklable for worker processes."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    rho: np.ndarray
    physics: LinkPhysics
    timing: LinkTimingSpec
    duty: DutyCycleSpec
    repetition_rate_hz: float
    importance_boost: float = Field(gt=0.0)
    pair_probabilities: Tuple[float, float, float]
    log_cycles: int = 0

    @property
    def frame_ns(self) -> float:
        """One storage period; every temporal slot gets one attempt per frame."""
        return max(self.physics.storage_time_ns, self.physics.slot_spacing_ns * self.physics.modes)

    def frames_per_cycle(self) -> int:
        return int(self.duty.storage_window_ms * 1e6 // self.frame_ns)

    def attempts_per_cycle(self) -> int:
        return self.frames_per_cycle() * self.physics.modes


class ChunkResult(BaseModel):
    """Additive tallies of one block of cycles."""

    cycles: int = 0
    failed_cycles: int = 0
    attempts: int = 0
    heralds: int = 0
    signal_events: int = 0
    accidental_events: int = 0
    basis_counts: Dict[str, List[int]] = Field(default_factory=lambda: {b: [0, 0] for b in PAULI_BASES})
    singles_1: int = 0
    singles_2: int = 0
    coincidences: int = 0
    pulses: int = 0
    storage_ns: float = 0.0
    elapsed_ns: float = 0.0
    events: List[Tuple[float, str, Dict[str, int]]] = Field(default_factory=list)

    def merge(self, other: "ChunkResult") -> "ChunkResult":
        merged = self.model_copy(deep=True)
        for name in (
            "cycles",
            "failed_cycles",
            "attempts",
            "heralds",
            "signal_events",
            "accidental_events",
            "singles_1",
            "singles_2",
            "coincidences",
            "pulses",
            "storage_ns",
            "elapsed_ns",
        ):
            setattr(merged, name, getattr(self, name) + getattr(other, name))
        for basis, (agree, total) in other.basis_counts.items():
            merged.basis_counts[basis][0] += agree
            merged.basis_counts[basis][1] += total
        merged.events = self.events + other.events
        return merged


def basis_agreement_probability(rho: np.ndarray, basis: str) -> float:
    """Probability that both analyzers report the same eigenvalue in σ⊗σ."""
    plus, minus = (KETS[label] for label in PAULI_BASES[basis])
    total = 0.0
    for first, second in ((plus, plus), (minus, minus)):
        ket = np.kron(first, second)
        total += float((ket.conj() @ rho @ ket).real)
    return min(max(total, 0.0), 1.0)


def _log_cycle(
    plan: MonteCarloPlan,
    rng: np.random.Generator,
    cycle: int,
    heralds: np.ndarray,
    fourfold: np.ndarray,
    result: ChunkResult,
) -> None:
    """Timestamped events of one cycle; each herald occupies its slot in both memories until retrieval."""
    physics, timing = plan.physics, plan.timing
    duty = plan.duty
    period_ns = 1e9 / duty.cycle_rate_hz
    start = cycle * period_ns + (duty.afc_prep_ms + duty.guard_wait_ms) * 1e6
    frames = max(plan.frames_per_cycle(), 1)
    to_memory_ns = timing.fiber_to_memory_m / timing.fiber_index_speed_m_s * 1e9
    registers = [TemporalModeRegister(physics.slot_spacing_ns, physics.storage_time_ns) for _ in MEMORY_PATHS]

    result.events.append((cycle * period_ns, EventKind.PULSE.value, {"cycle": cycle, "attempts": plan.attempts_per_cycle()}))
    for slot, count in enumerate(heralds):
        for _ in range(int(count)):
            frame = int(rng.integers(frames))
            emitted = start + frame * plan.frame_ns + slot * physics.slot_spacing_ns
            result.events.append((emitted, EventKind.EMISSION.value, {"cycle": cycle, "frame": frame, "slot": slot}))
            for register, path in zip(registers, MEMORY_PATHS):
                register.occupy(slot, path, emitted + to_memory_ns)
            result.events.append((emitted + to_memory_ns, EventKind.ABSORPTION.value, {"cycle": cycle, "slot": slot}))
            result.events.append(
                (emitted + timing.communication_delay_ns(), EventKind.HERALD.value, {"cycle": cycle, "frame": frame, "slot": slot})
            )
            for register in registers:
                register.free(slot)
            result.events.append((emitted + physics.storage_time_ns, EventKind.RETRIEVAL.value, {"cycle": cycle, "slot": slot}))
    for slot, count in enumerate(fourfold):
        for _ in range(int(count)):
            frame = int(rng.integers(frames))
            detected = start + frame * plan.frame_ns + slot * physics.slot_spacing_ns + physics.storage_time_ns
            result.events.append((detected, EventKind.DETECTION.value, {"cycle": cycle, "frame": frame, "slot": slot}))


def simulate_chunk(plan: MonteCarloPlan, first_cycle: int, cycles: int, seed: np.random.SeedSequence) -> ChunkResult:
    """Simulate a block of duty cycles; a pure function of its arguments.

    Every temporal slot of every storage frame is one attempt. Heralds and boosted
    fourfold coincidences are drawn per slot; each coincidence is a signal event with
    the retrieval share of the coincidence probability, otherwise an accidental.
    """
    rng = np.random.default_rng(seed)
    physics, duty, timing = plan.physics, plan.duty, plan.timing
    period_ns = 1e9 / duty.cycle_rate_hz
    window_ns = duty.storage_window_ms * 1e6
    pulses = int(round(plan.repetition_rate_hz * window_ns * 1e-9))
    frames = plan.frames_per_cycle()
    margin = timing.storage_time_ns - timing.communication_delay_ns()

    coincidence = physics.signal_probability + physics.accidental_probability
    signal_share = physics.signal_probability / coincidence if coincidence > 0 else 0.0
    boosted = min(physics.fourfold_probability * plan.importance_boost, 1.0)
    agreement = {basis: basis_agreement_probability(plan.rho, basis) for basis in PAULI_BASES}
    p1, p2, p12 = plan.pair_probabilities

    result = ChunkResult()
    for offset in range(cycles):
        cycle = first_cycle + offset
        result.cycles += 1
        result.pulses += pulses
        result.storage_ns += window_ns
        result.elapsed_ns += period_ns

        # source diagnostics during the storage window
        coincidences = int(rng.binomial(pulses, p12))
        result.coincidences += coincidences
        result.singles_1 += coincidences + int(rng.binomial(pulses, max(p1 - p12, 0.0)))
        result.singles_2 += coincidences + int(rng.binomial(pulses, max(p2 - p12, 0.0)))

        if margin < 0:
            result.failed_cycles += 1
            continue

        result.attempts += frames * physics.modes
        heralds = rng.binomial(frames, physics.herald_probability, size=physics.modes)
        fourfold = rng.binomial(frames, boosted, size=physics.modes)
        signal = int(rng.binomial(int(fourfold.sum()), signal_share))
        accidental = int(fourfold.sum()) - signal
        result.heralds += int(heralds.sum())
        result.signal_events += signal
        result.accidental_events += accidental

        for is_signal in [True] * signal + [False] * accidental:
            basis = tuple(PAULI_BASES)[int(rng.integers(3))]
            p_agree = agreement[basis] if is_signal else 0.5
            result.basis_counts[basis][0] += int(rng.random() < p_agree)
            result.basis_counts[basis][1] += 1

        if cycle < plan.log_cycles:
            _log_cycle(plan, rng, cycle, heralds, fourfold, result)
    return result


class LinkService:
    """Rate arithmetic and stochastic simulation of one elementary link."""

    def __init__(self, memory: MemoryService, logger: Logger, *, chunk_cycles: int = 1000, max_jobs: int = 64) -> None:
        self._memory = memory
        self._logger = logger
        self._chunk_cycles = chunk_cycles
        self._max_jobs = max_jobs

    # ------------------------------------------------------------------
    # closed-form budget
    # ------------------------------------------------------------------
    @staticmethod
    def heralding_margin(timing: LinkTimingSpec) -> float:
        """Storage time left after the herald reaches the memories, in ns."""
        return timing.storage_time_ns - timing.communication_delay_ns()

    @staticmethod
    def edr_analytic(budget: RateBudget) -> float:
        return budget.fourfold_before_storage_per_h * budget.end_to_end_a * budget.end_to_end_b * budget.duty

    @staticmethod
    def stored_edr(budget: RateBudget) -> float:
        """Measured EDR with the retrieval-side losses divided out."""
        losses = (budget.recall_efficiency * budget.retrieval_transmission * budget.detection_efficiency) ** 2
        return budget.measured_edr_per_h / losses

    @staticmethod
    def edr_multiplexed(base_edr: float, modes: int, base_modes: int = 4) -> float:
        if modes < 1:
            raise LinkSimError(f"Mode count must be at least 1, got {modes}")
        return base_edr * modes / base_modes

    @staticmethod
    def accidental_probability_per_herald(budget: RateBudget) -> float:
        return (budget.noise_rate_per_channel_hz * budget.retrieved_window_ns * 1e-9) ** 2

    def accidental_rate(self, budget: RateBudget) -> float:
        return self.accidental_probability_per_herald(budget) * budget.herald_rate_hz * SECONDS_PER_HOUR

    @staticmethod
    def heralding_probability(fourfold_rate_per_h: float, herald_rate_hz: float) -> float:
        if herald_rate_hz <= 0:
            raise LinkSimError("Herald rate must be positive")
        return fourfold_rate_per_h / (herald_rate_hz * SECONDS_PER_HOUR)

    def fidelity_vs_efficiency(
        self,
        budget: RateBudget,
        efficiencies: Iterable[float],
        reference_efficiencies: Tuple[float, float] = (0.143, 0.125),
        *,
        noise_probability: Optional[float] = None,
        signal_fidelity: Optional[float] = None,
    ) -> List[FidelityCurvePoint]:
        """F(η) = (F·S + N/4)/(S + N), the signal scaling with η² of the two memories."""
        signal_fidelity = budget.fidelity_signal if signal_fidelity is None else signal_fidelity
        noise = self.accidental_probability_per_herald(budget) if noise_probability is None else noise_probability
        reference_signal = self.heralding_probability(budget.measured_edr_per_h, budget.herald_rate_hz)
        reference = reference_efficiencies[0] * reference_efficiencies[1]
        curve = []
        for eta in efficiencies:
            if not 0.0 < eta <= 1.0:
                raise LinkSimError(f"Efficiency must lie in (0, 1], got {eta}")
            signal = reference_signal * eta**2 / reference
            fidelity = (signal_fidelity * signal + 0.25 * noise) / (signal + noise)
            curve.append(FidelityCurvePoint(efficiency=eta, fidelity=fidelity, signal=signal, noise=noise))
        return curve

    def efficiency_at_fidelity(self, budget: RateBudget, target: float = 0.5, **kwargs) -> float:
        """Memory efficiency at which the noisy fidelity falls to the target."""
        # N is the analyzer noise coincidence alone, so the crossing scales as √N; multi-pair
        # coincidences are not in N and would move it to higher η
        grid = np.logspace(-7, 0, 701)
        curve = self.fidelity_vs_efficiency(budget, grid, **kwargs)
        fidelities = np.array([point.fidelity for point in curve])
        above = np.nonzero(fidelities >= target)[0]
        if above.size == 0:
            raise LinkSimError(f"Fidelity never reaches {target}")
        index = int(above[0])
        if index == 0:
            return float(grid[0])
        low, high = np.log(grid[index - 1]), np.log(grid[index])
        f_low, f_high = fidelities[index - 1], fidelities[index]
        return float(np.exp(low + (target - f_low) * (high - low) / (f_high - f_low)))

    # ------------------------------------------------------------------
    # projections
    # ------------------------------------------------------------------
    @staticmethod
    def deterministic_source_enhancement(pair_probability: float, collection_efficiency: float) -> float:
        return 1.0 / (pair_probability**2 * collection_efficiency**2)

    @staticmethod
    def memory_upgrade_factor(new_efficiency: float, efficiency_a: float, efficiency_b: float) -> float:
        return new_efficiency**2 / (efficiency_a * efficiency_b)

    @staticmethod
    def repetition_scaling(rate: float, from_hz: float, to_hz: float) -> float:
        return rate * to_hz / from_hz

    def budget_report(
        self,
        budget: RateBudget,
        timing: LinkTimingSpec,
        source: SpdcSourceSpec,
        memories: Tuple[MemorySpec, MemorySpec],
        modes: Sequence[int] = (1, 4, 56),
    ) -> RateBudgetReport:
        edr = self.edr_analytic(budget)
        multiplexed = {m: self.edr_multiplexed(budget.measured_edr_per_h, m, budget.measured_modes) for m in modes}
        efficiency_a = memories[0].intrinsic_efficiency_at_ts
        efficiency_b = memories[1].intrinsic_efficiency_at_ts
        collection = source.heralding_efficiency**2
        projections = [
            EdrProjection(
                label="deterministic_sources",
                factor=self.deterministic_source_enhancement(source.pair_prob_per_pulse, budget.measured_pair_collection),
                rate_per_h=budget.measured_edr_per_h
                * self.deterministic_source_enhancement(source.pair_prob_per_pulse, budget.measured_pair_collection),
            ),
            EdrProjection(
                label="memory_efficiency_upgrade",
                factor=self.memory_upgrade_factor(UPGRADED_MEMORY_EFFICIENCY, efficiency_a, efficiency_b),
                rate_per_h=budget.measured_edr_per_h * self.memory_upgrade_factor(UPGRADED_MEMORY_EFFICIENCY, efficiency_a, efficiency_b),
            ),
            EdrProjection(
                label="repetition_rate_1ghz",
                factor=PROJECTED_REPETITION_HZ / MEASURED_REPETITION_HZ,
                rate_per_h=self.repetition_scaling(PROJECTED_EDR_PER_H, MEASURED_REPETITION_HZ, PROJECTED_REPETITION_HZ),
            ),
        ]
        return RateBudgetReport(
            heralding_margin_ns=self.heralding_margin(timing),
            edr_per_h=edr,
            stored_edr_per_h=self.stored_edr(budget),
            multiplexed_edr_per_h=multiplexed,
            accidental_per_h=self.accidental_rate(budget),
            accidental_probability_per_herald=self.accidental_probability_per_herald(budget),
            heralding_probability=self.heralding_probability(budget.measured_edr_per_h, budget.herald_rate_hz),
            four_photon_probability=source.pair_prob_per_pulse**2,
            pair_collection_efficiency=collection,
            memory_figure_of_merit={
                "A": efficiency_a * memories[0].storage_time_ns * memories[0].bandwidth_ghz,
                "B": efficiency_b * memories[1].storage_time_ns * memories[1].bandwidth_ghz,
            },
            projections=projections,
            single_photon_scheme={
                "herald_rate_hz": SINGLE_PHOTON_SCHEME_HERALD_HZ,
                "two_photon_herald_rate_hz": budget.herald_rate_hz,
                "ratio": SINGLE_PHOTON_SCHEME_HERALD_HZ / budget.herald_rate_hz,
            },
        )

    # ------------------------------------------------------------------
    # Monte Carlo
    # ------------------------------------------------------------------
    def link_physics(
        self,
        heralded: HeraldedMemoryState,
        node_a: NodeSpec,
        node_b: NodeSpec,
        analyzer_detector: ThresholdDetectorSpec,
        timing: LinkTimingSpec,
        *,
        repetition_rate_hz: float = 8.0e7,
        modes: int = 4,
    ) -> LinkPhysics:
        """Per-attempt probabilities: herald from the exact BSM state, retrieval from η(t) and the analyzers."""
        if modes < 1:
            raise LinkSimError(f"Mode count must be at least 1, got {modes}")
        storage_ns = timing.storage_time_ns
        register = TemporalModeRegister(1e9 / repetition_rate_hz, storage_ns)
        capacity = max(register.capacity_repetition_limited, 1)
        if modes > capacity:
            self._logger.warning(
                "%d modes requested but %.1f ns storage holds %d slots at %.3g Hz; using %d",
                modes,
                storage_ns,
                capacity,
                repetition_rate_hz,
                capacity,
            )
            modes = capacity
        analyzers = [
            analyzer_detector.scaled(
                node.source.heralding_efficiency
                * self._memory.retrieval_transmission(node.memory, storage_ns, analyzer_detector.efficiency)
            )
            for node in (node_a, node_b)
        ]
        return LinkPhysics(
            herald_probability=heralded.herald_probability,
            retrieval_probabilities=(analyzers[0].efficiency, analyzers[1].efficiency),
            dark_probabilities=(analyzers[0].dark_count_prob_per_window, analyzers[1].dark_count_prob_per_window),
            storage_time_ns=storage_ns,
            slot_spacing_ns=register.slot_spacing_ns,
            modes=modes,
        )

    @staticmethod
    def auto_importance_boost(physics: LinkPhysics, duty: DutyCycleSpec) -> float:
        """Boost that puts about one weighted fourfold event in each cycle."""
        frame_ns = max(physics.storage_time_ns, physics.slot_spacing_ns * physics.modes)
        attempts = int(duty.storage_window_ms * 1e6 // frame_ns) * physics.modes
        probability = physics.fourfold_probability
        if probability <= 0 or attempts <= 0:
            return 1.0
        return max(1.0, 1.0 / (attempts * probability))

    def run_link_monte_carlo(
        self,
        rho: TwoQubitDensityMatrix,
        physics: LinkPhysics,
        timing: LinkTimingSpec,
        duty: DutyCycleSpec,
        pair_statistics: PairStatistics,
        *,
        repetition_rate_hz: float = 8.0e7,
        cycles: int = 20_000,
        seed: int = 2021,
        jobs: int = 1,
        importance_boost: Optional[float] = None,
        log_cycles: int = 0,
    ) -> Tuple[MonteCarloReport, EventLog]:
        """Seeded simulation of duty cycles; the result is identical for any job count."""
        if cycles < 1:
            raise LinkSimError("At least one cycle is required")
        boost = importance_boost or self.auto_importance_boost(physics, duty)
        plan = MonteCarloPlan(
            rho=rho.matrix,
            physics=physics,
            timing=timing,
            duty=duty,
            repetition_rate_hz=repetition_rate_hz,
            importance_boost=boost,
            pair_probabilities=(pair_statistics.p1, pair_statistics.p2, pair_statistics.p12),
            log_cycles=log_cycles,
        )
        blocks = [(start, min(self._chunk_cycles, cycles - start)) for start in range(0, cycles, self._chunk_cycles)]
        seeds = np.random.SeedSequence(seed).spawn(len(blocks))
        self._logger.info(
            "Monte Carlo: %d cycles in %d chunks, %d modes, %d attempts per cycle, boost %.3g",
            cycles,
            len(blocks),
            physics.modes,
            plan.attempts_per_cycle(),
            boost,
        )

        workers = min(jobs, self._max_jobs, len(blocks))
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(simulate_chunk, plan, start, size, chunk_seed) for (start, size), chunk_seed in zip(blocks, seeds)]
                results = [future.result() for future in futures]
        else:
            results = [simulate_chunk(plan, start, size, chunk_seed) for (start, size), chunk_seed in zip(blocks, seeds)]

        total = ChunkResult()
        for result in results:
            total = total.merge(result)
        report = self._report(total, plan, seed)
        log = EventLog()
        for time_ns, kind, payload in total.events:
            log.record(time_ns, EventKind(kind), **payload)
        return report, log

    def _report(self, total: ChunkResult, plan: MonteCarloPlan, seed: int) -> MonteCarloReport:
        elapsed_h = total.elapsed_ns * 1e-9 / SECONDS_PER_HOUR
        elapsed_s = total.elapsed_ns * 1e-9
        weighted_fourfold = (total.signal_events + total.accidental_events) / plan.importance_boost
        fourfold_rate = weighted_fourfold / elapsed_h
        fourfold_error = math.sqrt(total.signal_events + total.accidental_events) / plan.importance_boost / elapsed_h
        herald_rate = total.heralds / elapsed_s
        herald_error = math.sqrt(total.heralds) / elapsed_s

        correlations: Dict[str, float] = {}
        variances: Dict[str, float] = {}
        for basis, (agree, count) in total.basis_counts.items():
            if count == 0:
                correlations[basis] = float("nan")
                variances[basis] = float("nan")
                continue
            value = 2 * agree / count - 1
            correlations[basis] = value
            variances[basis] = max(1 - value**2, 1.0 / count) / count
        if all(math.isfinite(value) for value in correlations.values()):
            fidelity = (1 + correlations["X"] - correlations["Y"] + correlations["Z"]) / 4
            fidelity_error = math.sqrt(sum(variances.values())) / 4
        else:
            self._logger.warning("Too few fourfold events for a fidelity estimate")
            fidelity, fidelity_error = float("nan"), 0.0

        if total.singles_1 and total.singles_2:
            g2 = total.coincidences * total.pulses / (total.singles_1 * total.singles_2)
            g2_error = g2 / math.sqrt(total.coincidences) if total.coincidences else 0.0
        else:
            g2, g2_error = float("nan"), 0.0

        if total.failed_cycles:
            self._logger.warning("%d of %d cycles failed the heralding margin", total.failed_cycles, total.cycles)
        return MonteCarloReport(
            seed=seed,
            cycles=total.cycles,
            modes=plan.physics.modes,
            attempts=total.attempts,
            duty_fraction=total.storage_ns / total.elapsed_ns,
            failed_cycles=total.failed_cycles,
            heralds=total.heralds,
            fourfold_events=weighted_fourfold,
            herald_rate_hz=Estimate.from_value(herald_rate, herald_error),
            fourfold_rate_per_h=Estimate.from_value(fourfold_rate, fourfold_error),
            fidelity=Estimate.from_value(fidelity, fidelity_error),
            witness=Estimate.from_value(0.5 - fidelity, fidelity_error),
            g2=Estimate.from_value(g2, g2_error),
            heralding_margin_ns=self.heralding_margin(plan.timing),
            correlations={f"{basis}{basis}": value for basis, value in correlations.items()},
        )
