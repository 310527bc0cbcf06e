"""Type-II SPDC source, post-selecting interferometer and pair statistics."""
from __future__ import annotations

import math
from logging import Logger
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from app.domain.models.errors import LinkSimError, ZeroProbabilityError
from app.domain.models.fock_models import (
    ClickPattern,
    DetectorBinding,
    FockTruncation,
    ModeId,
    Polarization,
    PureFockState,
    ThresholdDetectorSpec,
    path_modes,
)
from app.domain.models.source_models import (
    PairStatistics,
    SourceCalibration,
    SourceStateResult,
    SpdcSourceSpec,
)
from app.domain.services.analysis_service import AnalysisService, depolarize
from app.domain.services.fock_engine import FockEngine

INTERNAL_PATHS = ("a", "b")
# two-pair coefficient of the two-mode-squeezed expansion: amplitudes λⁿ with λ² = p
TWO_PAIR_FACTOR = 1.0


class SourceService:
    """Builds source states and evaluates their click statistics."""

    def __init__(self, engine: FockEngine, analysis: AnalysisService, logger: Logger) -> None:
        self._engine = engine
        self._analysis = analysis
        self._logger = logger

    def _engine_for(self, spec: SpdcSourceSpec) -> FockEngine:
        photons = max(2 * spec.max_pairs, 2)
        current = self._engine.truncation
        if current.per_mode >= photons and current.total >= photons:
            return self._engine
        return self._engine.with_truncation(FockTruncation(per_mode=photons, total=photons))

    # ------------------------------------------------------------------
    # states
    # ------------------------------------------------------------------
    def spdc_raw_state(self, spec: SpdcSourceSpec) -> PureFockState:
        """0, 1 and 2 pair terms of |n⟩ₐ(H)|n⟩_b(V) with amplitudes (1, √p, p·c₂)."""
        a_h = ModeId(path=INTERNAL_PATHS[0], polarization=Polarization.H)
        b_v = ModeId(path=INTERNAL_PATHS[1], polarization=Polarization.V)
        p = spec.pair_prob_per_pulse
        amplitudes = [1.0, math.sqrt(p), p * TWO_PAIR_FACTOR][: spec.max_pairs + 1]
        terms = [(amplitude, {a_h: n, b_v: n}) for n, amplitude in enumerate(amplitudes) if amplitude != 0.0]
        modes = path_modes(INTERNAL_PATHS[0]) + path_modes(INTERNAL_PATHS[1])
        return PureFockState.from_terms(terms, modes=modes).normalized()

    def interferometer(self, state: PureFockState, spec: Optional[SpdcSourceSpec] = None) -> PureFockState:
        """HWP at 22.5° on both internal paths, then the combining PBS onto the output paths."""
        spec = spec or SpdcSourceSpec()
        engine = self._engine_for(spec)
        rotated = engine.waveplate(state, INTERNAL_PATHS[0], 22.5)
        rotated = engine.waveplate(rotated, INTERNAL_PATHS[1], 22.5)
        return engine.pbs(rotated, INTERNAL_PATHS, (spec.memory_path, spec.bsm_path))

    def emit(self, spec: SpdcSourceSpec) -> PureFockState:
        return self.interferometer(self.spdc_raw_state(spec), spec)

    def single_pair_state(self, spec: SpdcSourceSpec) -> PureFockState:
        """Exactly one pair |H⟩ₐ|V⟩_b through the interferometer."""
        pair = PureFockState.from_terms(
            [(1.0, {ModeId(path=INTERNAL_PATHS[0], polarization=Polarization.H): 1, ModeId(path=INTERNAL_PATHS[1], polarization=Polarization.V): 1})],
            modes=path_modes(INTERNAL_PATHS[0]) + path_modes(INTERNAL_PATHS[1]),
        )
        return self.interferometer(pair, spec)

    # ------------------------------------------------------------------
    # statistics
    # ------------------------------------------------------------------
    def pair_statistics(
        self,
        state: PureFockState,
        detectors: Tuple[DetectorBinding, DetectorBinding],
        *,
        repetition_rate_hz: float = 8.0e7,
        window_ns: Optional[float] = None,
    ) -> PairStatistics:
        """Singles and coincidence probabilities of two threshold detectors per pulse."""
        measurement = self._engine.measure_threshold(
            state, {"1": detectors[0], "2": detectors[1]}, keep_states=False
        )
        p12 = measurement.probability(ClickPattern.of("1", "2"))
        p1 = p12 + measurement.probability(ClickPattern.of("1"))
        p2 = p12 + measurement.probability(ClickPattern.of("2"))
        if p1 <= 0.0 or p2 <= 0.0:
            raise ZeroProbabilityError("g2 undefined: a singles probability is zero")
        return PairStatistics(
            p1=p1,
            p2=p2,
            p12=p12,
            g2=p12 / (p1 * p2),
            window_ns=window_ns or detectors[0].spec.window_ns,
            singles_rate_1_hz=p1 * repetition_rate_hz,
            singles_rate_2_hz=p2 * repetition_rate_hz,
            coincidence_rate_hz=p12 * repetition_rate_hz,
        )

    def g2_cross_correlation(
        self,
        spec: SpdcSourceSpec,
        detector: Optional[ThresholdDetectorSpec] = None,
        window_ns: Optional[float] = None,
    ) -> PairStatistics:
        """Zero-delay cross-correlation between the two output paths, window all-inclusive."""
        detector = (detector or ThresholdDetectorSpec()).scaled(spec.heralding_efficiency)
        state = self.emit(spec)
        bindings = (
            DetectorBinding(modes=path_modes(spec.memory_path), spec=detector),
            DetectorBinding(modes=path_modes(spec.bsm_path), spec=detector),
        )
        return self.pair_statistics(
            state, bindings, repetition_rate_hz=spec.repetition_rate_hz, window_ns=window_ns
        )

    def g2_curve(
        self, spec: SpdcSourceSpec, grid: Sequence[float], detector: Optional[ThresholdDetectorSpec] = None
    ) -> List[PairStatistics]:
        return [self.g2_cross_correlation(spec.with_pair_probability(p), detector) for p in grid]

    def solve_pair_probability_for_g2(
        self,
        spec: SpdcSourceSpec,
        target_g2: float,
        detector: Optional[ThresholdDetectorSpec] = None,
        bracket: Tuple[float, float] = (1e-4, 0.2),
    ) -> float:
        """Pair probability at which the exact g² curve crosses the target."""

        def excess(p: float) -> float:
            return self.g2_cross_correlation(spec.with_pair_probability(p), detector).g2 - target_g2

        low, high = bracket
        if excess(low) * excess(high) > 0:
            raise LinkSimError(f"g2={target_g2} is not reachable for p in {bracket}")
        p = float(optimize.brentq(excess, low, high, xtol=1e-10))
        self._logger.info("g2=%.1f reached at p=%.5f", target_g2, p)
        return p

    def coincidence_linearity(
        self,
        spec: SpdcSourceSpec,
        detector: Optional[ThresholdDetectorSpec] = None,
        p_range: Tuple[float, float] = (0.001, 0.02),
        points: int = 11,
    ) -> Tuple[float, float]:
        """Least-squares slope of the coincidence rate in p, and the exact derivative at the range centre."""
        grid = np.linspace(p_range[0], p_range[1], points)
        rates = [stats.coincidence_rate_hz for stats in self.g2_curve(spec, grid, detector)]
        slope = float(np.polyfit(grid, rates, 1)[0])
        centre = 0.5 * (p_range[0] + p_range[1])
        step = 1e-5
        upper, lower = self.g2_curve(spec, [centre + step, centre - step], detector)
        derivative = (upper.coincidence_rate_hz - lower.coincidence_rate_hz) / (2 * step)
        return slope, derivative

    # ------------------------------------------------------------------
    # polarization state
    # ------------------------------------------------------------------
    def postselected_source_rho(
        self, spec: SpdcSourceSpec, detector: Optional[ThresholdDetectorSpec] = None
    ) -> SourceStateResult:
        """Coincidence-conditioned polarization state of the two output paths.

        The memory-side qubit is depolarized with the source's intrinsic visibility.
        """
        detector = (detector or ThresholdDetectorSpec()).scaled(spec.heralding_efficiency)
        engine = self._engine_for(spec)
        analyzed_engine = engine.with_truncation(
            FockTruncation(per_mode=engine.truncation.total, total=engine.truncation.total)
        )
        raw, mass = self._analysis.analyzer_density_matrix(
            analyzed_engine, self.emit(spec), (spec.memory_path, spec.bsm_path), (detector, detector)
        )
        rho = depolarize(raw, visibility_a=spec.intrinsic_visibility)
        return SourceStateResult(
            rho=rho,
            postselected_mass=mass,
            fidelity=self._analysis.fidelity_phi_plus(rho),
            pair_prob_per_pulse=spec.pair_prob_per_pulse,
            visibility=spec.intrinsic_visibility,
        )

    def calibrate_visibility(
        self,
        spec: SpdcSourceSpec,
        target_fidelity: float,
        *,
        node: str = "A",
        target_g2: Optional[float] = None,
        detector: Optional[ThresholdDetectorSpec] = None,
    ) -> SourceCalibration:
        """Visibility that brings the source fidelity to the target; F = v·F₁ + (1 − v)/4."""
        ideal = self.postselected_source_rho(spec.model_copy(update={"intrinsic_visibility": 1.0}), detector)
        if target_fidelity > ideal.fidelity + 1e-12:
            raise LinkSimError(
                f"Target fidelity {target_fidelity} exceeds the multi-pair limit {ideal.fidelity:.4f}"
            )
        visibility = float(np.clip((target_fidelity - 0.25) / (ideal.fidelity - 0.25), 0.0, 1.0))
        achieved = visibility * ideal.fidelity + (1 - visibility) / 4
        self._logger.info("Node %s: visibility %.4f gives fidelity %.4f", node, visibility, achieved)
        return SourceCalibration(
            node=node,
            target_g2=target_g2,
            pair_prob_per_pulse=spec.pair_prob_per_pulse,
            target_fidelity=target_fidelity,
            intrinsic_visibility=visibility,
            achieved_fidelity=achieved,
        )
