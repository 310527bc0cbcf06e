"""Tests for the sparse Fock-space engine."""
from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from app.domain.models.errors import FockStateError, ZeroProbabilityError
from app.domain.models.fock_models import (
    IDEAL_DETECTOR,
    ClickPattern,
    DetectorBinding,
    ModeId,
    ModeKind,
    MixedFockState,
    Polarization,
    PureFockState,
    ThresholdDetectorSpec,
    Waveplate,
    dark_count_probability,
    path_modes,
)
from app.domain.services.fock_engine import FockEngine

H, V = Polarization.H, Polarization.V


def mode(path: str, polarization: Polarization, kind: ModeKind = ModeKind.OPTICAL) -> ModeId:
    return ModeId(path=path, polarization=polarization, kind=kind)


def photon(path: str, polarization: Polarization) -> PureFockState:
    return PureFockState.from_terms([(1.0, {mode(path, polarization): 1})])


def phi_plus(a: str = "a", b: str = "b") -> PureFockState:
    amplitude = 1 / math.sqrt(2)
    return PureFockState.from_terms(
        [
            (amplitude, {mode(a, H): 1, mode(b, H): 1}),
            (amplitude, {mode(a, V): 1, mode(b, V): 1}),
        ]
    )


def test_half_waveplate_rotates_h_to_diagonal(engine: FockEngine) -> None:
    rotated = engine.waveplate(photon("x", H), "x", 22.5)
    assert rotated.amplitude_of({mode("x", H): 1}) == pytest.approx(1 / math.sqrt(2))
    assert rotated.amplitude_of({mode("x", V): 1}) == pytest.approx(1 / math.sqrt(2))


def test_half_waveplate_twice_is_identity(engine: FockEngine) -> None:
    state = engine.waveplate(engine.waveplate(photon("x", V), "x", 22.5), "x", 22.5)
    assert state.distance(photon("x", V)) < 1e-12


def test_single_input_pbs_transmits_h_and_reflects_v(engine: FockEngine) -> None:
    transmitted = engine.pbs(photon("x", H), ["x"], ("T", "R"))
    reflected = engine.pbs(photon("x", V), ["x"], ("T", "R"))
    assert transmitted.amplitude_of({mode("T", H): 1}) == pytest.approx(1.0)
    assert reflected.amplitude_of({mode("R", V): 1}) == pytest.approx(1j)


def test_two_photons_split_by_pbs_click_both_detectors(engine: FockEngine) -> None:
    state = PureFockState.from_terms([(1.0, {mode("x", H): 1, mode("x", V): 1})])
    routed = engine.pbs(state, ["x"], ("T", "R"))
    detectors = {
        "T": DetectorBinding(modes=path_modes("T")),
        "R": DetectorBinding(modes=path_modes("R")),
    }
    measurement = engine.measure_threshold(routed, detectors)
    assert measurement.probability(ClickPattern.of("T", "R")) == pytest.approx(1.0)


def test_single_photon_clicks_ideal_detector(engine: FockEngine) -> None:
    measurement = engine.measure_threshold(photon("x", H), {"d": DetectorBinding(modes=path_modes("x"))})
    assert measurement.probability(ClickPattern.of("d")) == pytest.approx(1.0)


def test_vacuum_clicks_with_dark_count_probability(engine: FockEngine) -> None:
    noisy = ThresholdDetectorSpec(efficiency=0.85, dark_count_prob_per_window=0.01)
    measurement = engine.measure_threshold(PureFockState.vacuum(), {"d": DetectorBinding(modes=path_modes("x"), spec=noisy)})
    assert measurement.probability(ClickPattern.of("d")) == pytest.approx(0.01)


def test_click_patterns_are_complete_for_lossy_noisy_detectors(engine: FockEngine) -> None:
    spec = ThresholdDetectorSpec(efficiency=0.6, dark_count_prob_per_window=0.05)
    state = engine.tensor(phi_plus("a", "b"), phi_plus("c", "d"))
    detectors = {label: DetectorBinding(modes=path_modes(label), spec=spec) for label in "abcd"}
    measurement = engine.measure_threshold(state, detectors, keep_states=False)
    assert measurement.total_probability() == pytest.approx(1.0, abs=1e-10)
    assert len(measurement.outcomes) == 16


def test_sampled_pattern_is_reproducible(engine: FockEngine) -> None:
    spec = ThresholdDetectorSpec(efficiency=0.5)
    detectors = {label: DetectorBinding(modes=path_modes(label), spec=spec) for label in "ab"}
    first = engine.measure_threshold(phi_plus(), detectors, seed=7).sampled
    second = engine.measure_threshold(phi_plus(), detectors, seed=7).sampled
    assert first == second


def test_loss_keeps_trace_and_splits_vacuum(engine: FockEngine) -> None:
    lossy = engine.loss(photon("x", H), "x", 0.3)
    assert isinstance(lossy, MixedFockState)
    assert lossy.total_probability() == pytest.approx(1.0)
    surviving = sum(weight for weight, branch in lossy.branches if branch.amplitude_of({mode("x", H): 1}) != 0)
    assert surviving == pytest.approx(0.3)


def test_full_transmission_is_identity(engine: FockEngine) -> None:
    lossless = engine.loss(phi_plus(), "a", 1.0)
    assert len(lossless) == 1
    assert lossless.branches[0][1].distance(phi_plus()) < 1e-12


def test_tensor_rejects_shared_modes(engine: FockEngine) -> None:
    with pytest.raises(FockStateError):
        engine.tensor(photon("x", H), photon("x", H))


def test_tensor_rejects_truncation_overflow(engine: FockEngine) -> None:
    crowded = PureFockState.from_terms([(1.0, {mode("x", H): 3})])
    with pytest.raises(FockStateError):
        engine.tensor(crowded, PureFockState.vacuum([mode("y", H)]))


def test_tensor_can_drop_terms_beyond_truncation(engine: FockEngine) -> None:
    crowded = PureFockState.from_terms([(1.0, {mode("x", H): 3}), (1.0, {mode("x", H): 1})])
    kept = engine.tensor(crowded, PureFockState.vacuum([mode("y", H)]), drop_excess=True)
    assert kept.photon_numbers() == [1]


def test_memory_modes_cannot_enter_optics(engine: FockEngine) -> None:
    stored = PureFockState.from_terms([(1.0, {mode("m", H, ModeKind.MEMORY): 1})])
    with pytest.raises(FockStateError):
        engine.apply_element(stored, Waveplate(angle_deg=22.5), path_modes("m", ModeKind.MEMORY))


def test_detectors_refuse_memory_modes() -> None:
    with pytest.raises(ValueError):
        DetectorBinding(modes=path_modes("m", ModeKind.MEMORY), spec=IDEAL_DETECTOR)


def test_relabel_moves_photon_into_memory(engine: FockEngine) -> None:
    mapping = dict(zip(path_modes("a"), path_modes("a", ModeKind.MEMORY)))
    stored = engine.relabel(phi_plus(), mapping)
    assert stored.amplitude_of({mode("a", H, ModeKind.MEMORY): 1, mode("b", H): 1}) == pytest.approx(1 / math.sqrt(2))


def test_project_and_trace_recovers_bell_state(engine: FockEngine) -> None:
    projection = engine.project_and_trace(phi_plus(), ("a", "b"))
    matrix = projection.rho.matrix
    assert projection.postselected_mass == pytest.approx(1.0)
    assert matrix[0, 0].real == pytest.approx(0.5)
    assert matrix[0, 3].real == pytest.approx(0.5)
    assert matrix[1, 1].real == pytest.approx(0.0, abs=1e-12)


def test_project_and_trace_without_mass_raises(engine: FockEngine) -> None:
    with pytest.raises(ZeroProbabilityError):
        engine.project_and_trace(photon("a", H), ("a", "b"))


def test_dark_count_probability_from_rate() -> None:
    assert dark_count_probability(0.0, 3.0) == 0.0
    assert dark_count_probability(200.0, 3.0) == pytest.approx(6e-7, rel=1e-6)


def random_two_path_state(rng: np.random.Generator) -> PureFockState:
    """Random superposition of up to two photons over the H/V modes of paths x and y."""
    modes = path_modes("x") + path_modes("y")
    terms = [
        (complex(rng.normal(), rng.normal()), dict(zip(modes, occupation)))
        for occupation in itertools.product(range(3), repeat=4)
        if sum(occupation) <= 2
    ]
    return PureFockState.from_terms(terms, modes=modes).normalized()


def weight_by_photon_number(state: PureFockState) -> dict:
    weights: dict = {}
    for occupation, amplitude in state.items():
        weights[sum(occupation)] = weights.get(sum(occupation), 0.0) + abs(amplitude) ** 2
    return weights


def test_linear_optics_preserve_norm_and_photon_number(engine: FockEngine) -> None:
    rng = np.random.default_rng(13)
    for _ in range(25):
        state = random_two_path_state(rng)
        before = weight_by_photon_number(state)
        out = engine.waveplate(state, "x", float(rng.uniform(0, 180)))
        out = engine.waveplate(out, "y", float(rng.uniform(0, 180)), retardance="quarter")
        out = engine.pbs(out, ["x", "y"], ("o1", "o2"))
        assert out.norm() == pytest.approx(1.0, abs=1e-12)
        after = weight_by_photon_number(out)
        for photons, weight in before.items():
            assert after.get(photons, 0.0) == pytest.approx(weight, abs=1e-12)


def test_sequential_losses_compose(engine: FockEngine) -> None:
    twice = engine.loss(engine.loss(photon("x", H), "x", 0.6), "x", 0.5)
    surviving = sum(weight for weight, branch in twice.branches if branch.amplitude_of({mode("x", H): 1}) != 0)
    assert surviving == pytest.approx(0.3)
    assert twice.total_probability() == pytest.approx(1.0)


def test_global_phase_of_a_waveplate_is_unobservable(engine: FockEngine) -> None:
    plain = engine.apply_element(phi_plus(), Waveplate(angle_deg=30.0), path_modes("a"))
    phased = engine.apply_element(phi_plus(), Waveplate(angle_deg=30.0, global_phase=1.1), path_modes("a"))
    assert abs(phased.norm() - plain.norm()) < 1e-12
    for occupation, amplitude in plain.canonical().items():
        assert abs(phased.canonical().get(occupation, 0.0)) == pytest.approx(abs(amplitude), abs=1e-12)
