"""Tests for the SPDC source model and its pair statistics."""
from __future__ import annotations

import pytest

from app.domain.models.errors import LinkSimError
from app.domain.models.fock_models import IDEAL_DETECTOR, DetectorBinding, path_modes
from app.domain.models.source_models import SpdcSourceSpec
from app.domain.services.analysis_service import AnalysisService
from app.domain.services.fock_engine import FockEngine
from app.domain.services.source_service import SourceService

SPEC = SpdcSourceSpec(memory_path="1", bsm_path="2")


def test_single_pair_leaves_interferometer_as_phi_plus(
    engine: FockEngine, sources: SourceService, analysis: AnalysisService
) -> None:
    projection = engine.project_and_trace(sources.single_pair_state(SPEC), ("1", "2"))
    assert projection.postselected_mass == pytest.approx(0.5)
    assert analysis.fidelity_phi_plus(projection.rho) == pytest.approx(1.0)


def test_raw_state_is_normalized_with_pair_terms(sources: SourceService) -> None:
    state = sources.spdc_raw_state(SPEC)
    assert state.norm() == pytest.approx(1.0)
    assert state.photon_numbers() == [0, 2, 4]
    single = sources.spdc_raw_state(SPEC.model_copy(update={"max_pairs": 1}))
    assert single.photon_numbers() == [0, 2]


def test_pair_statistics_convert_probabilities_to_rates(sources: SourceService) -> None:
    bindings = (
        DetectorBinding(modes=path_modes("1"), spec=IDEAL_DETECTOR),
        DetectorBinding(modes=path_modes("2"), spec=IDEAL_DETECTOR),
    )
    stats = sources.pair_statistics(sources.emit(SPEC), bindings, repetition_rate_hz=1e6)
    assert stats.singles_rate_1_hz == pytest.approx(stats.p1 * 1e6)
    assert stats.coincidence_rate_hz == pytest.approx(stats.p12 * 1e6)
    assert stats.g2 == pytest.approx(stats.p12 / (stats.p1 * stats.p2))


def test_g2_falls_with_pair_probability(sources: SourceService) -> None:
    curve = sources.g2_curve(SPEC, [0.002, 0.006, 0.012, 0.02])
    values = [stats.g2 for stats in curve]
    assert values == sorted(values, reverse=True)
    assert 30.0 < values[2] < 60.0


def test_solve_pair_probability_hits_target_g2(sources: SourceService) -> None:
    p = sources.solve_pair_probability_for_g2(SPEC, 50.0)
    assert 0.005 < p < 0.02
    assert sources.g2_cross_correlation(SPEC.with_pair_probability(p)).g2 == pytest.approx(50.0, rel=1e-6)


def test_unreachable_g2_target_raises(sources: SourceService) -> None:
    with pytest.raises(LinkSimError):
        sources.solve_pair_probability_for_g2(SPEC, 1.0001)


def test_coincidence_rate_is_linear_in_pair_probability(sources: SourceService) -> None:
    slope, derivative = sources.coincidence_linearity(SPEC)
    assert slope > 0.0
    assert slope == pytest.approx(derivative, rel=0.1)


def test_low_pair_probability_source_is_nearly_ideal(sources: SourceService) -> None:
    result = sources.postselected_source_rho(SPEC.with_pair_probability(0.001))
    assert result.fidelity > 0.99
    assert result.postselected_mass > 0.0


def test_intrinsic_visibility_depolarizes_memory_side(sources: SourceService) -> None:
    low_p = SPEC.with_pair_probability(0.001)
    ideal = sources.postselected_source_rho(low_p).fidelity
    degraded = sources.postselected_source_rho(low_p.model_copy(update={"intrinsic_visibility": 0.9})).fidelity
    assert degraded == pytest.approx(0.9 * ideal + 0.1 / 4)


def test_multipair_emission_lowers_fidelity(sources: SourceService) -> None:
    low = sources.postselected_source_rho(SPEC.with_pair_probability(0.002)).fidelity
    high = sources.postselected_source_rho(SPEC.with_pair_probability(0.02)).fidelity
    assert high < low


def test_calibrate_visibility_reaches_target(sources: SourceService) -> None:
    calibration = sources.calibrate_visibility(SPEC, 0.926, node="A", target_g2=50.0)
    assert calibration.achieved_fidelity == pytest.approx(0.926)
    assert 0.0 < calibration.intrinsic_visibility < 1.0
    tuned = SPEC.model_copy(update={"intrinsic_visibility": calibration.intrinsic_visibility})
    assert sources.postselected_source_rho(tuned).fidelity == pytest.approx(0.926, abs=1e-9)


def test_calibrate_visibility_rejects_unreachable_fidelity(sources: SourceService) -> None:
    with pytest.raises(LinkSimError):
        sources.calibrate_visibility(SPEC.with_pair_probability(0.1), 0.999)


def test_source_paths_must_differ() -> None:
    with pytest.raises(ValueError):
        SpdcSourceSpec(memory_path="1", bsm_path="1")


def test_single_pair_amplitudes_after_interferometer(sources: SourceService) -> None:
    state = sources.single_pair_state(SPEC)
    h1, v1 = path_modes("1")
    h2, v2 = path_modes("2")
    assert state.amplitude_of({h1: 1, h2: 1}) == pytest.approx(0.5)
    assert state.amplitude_of({v1: 1, v2: 1}) == pytest.approx(0.5)
    assert state.amplitude_of({h1: 1, v1: 1}) == pytest.approx(-0.5j)
    assert state.amplitude_of({h2: 1, v2: 1}) == pytest.approx(0.5j)
    assert len(state) == 4


def test_independent_sources_are_uncorrelated(engine: FockEngine, sources: SourceService) -> None:
    first = sources.emit(SpdcSourceSpec(memory_path="1", bsm_path="2", pair_prob_per_pulse=0.05, max_pairs=1))
    second = sources.emit(SpdcSourceSpec(memory_path="4", bsm_path="3", pair_prob_per_pulse=0.02, max_pairs=1))
    bindings = (
        DetectorBinding(modes=path_modes("1"), spec=IDEAL_DETECTOR),
        DetectorBinding(modes=path_modes("4"), spec=IDEAL_DETECTOR),
    )
    stats = sources.pair_statistics(engine.tensor(first, second), bindings)
    assert stats.g2 == pytest.approx(1.0, abs=1e-9)
