"""Tests for the witness, fidelity, CHSH and tomography routines."""
from __future__ import annotations

import math

import numpy as np
import pytest

from app.domain.models.analysis_models import TwoQubitDensityMatrix
from app.domain.models.errors import TomographyError
from app.domain.models.fock_models import IDEAL_DETECTOR, MixedFockState, ModeId, Polarization, PureFockState
from app.domain.services.analysis_service import (
    ANALYZER_ANGLES,
    KETS,
    PHI_PLUS,
    TOMOGRAPHY_LABELS,
    WITNESS_LABELS,
    AnalysisService,
    dephase,
    depolarize,
    projector_from_setting,
)
from app.domain.services.fock_engine import FockEngine

BELL = TwoQubitDensityMatrix.from_ket(PHI_PLUS)
MIXED = TwoQubitDensityMatrix.maximally_mixed()


def test_analyzer_angles_select_their_kets() -> None:
    for label, (qwp, hwp) in ANALYZER_ANGLES.items():
        expected = np.outer(KETS[label], KETS[label].conj())
        assert np.allclose(projector_from_setting(qwp, hwp, "H"), expected), label


def test_phi_plus_figures_of_merit(analysis: AnalysisService) -> None:
    assert analysis.fidelity_phi_plus(BELL) == pytest.approx(1.0)
    assert analysis.witness_expectation(BELL) == pytest.approx(-0.5)


def test_maximally_mixed_figures_of_merit(analysis: AnalysisService) -> None:
    assert analysis.fidelity_phi_plus(MIXED) == pytest.approx(0.25)
    assert analysis.witness_expectation(MIXED) == pytest.approx(0.25)


def test_witness_and_fidelity_are_complementary(analysis: AnalysisService) -> None:
    rho = depolarize(BELL, 0.7, 0.9)
    assert analysis.fidelity_phi_plus(rho) == pytest.approx(0.5 - analysis.witness_expectation(rho))


@pytest.mark.parametrize("visibility", [1.0, 0.9, 0.5, 0.0])
def test_single_qubit_depolarization_scales_fidelity(analysis: AnalysisService, visibility: float) -> None:
    rho = depolarize(BELL, visibility_a=visibility)
    assert analysis.fidelity_phi_plus(rho) == pytest.approx(visibility + (1 - visibility) / 4)


def test_chsh_reaches_tsirelson_bound_for_phi_plus(analysis: AnalysisService) -> None:
    result = analysis.chsh_S(BELL)
    assert result.s_value == pytest.approx(2 * math.sqrt(2), abs=1e-9)


def test_chsh_vanishes_for_mixed_state(analysis: AnalysisService) -> None:
    assert analysis.chsh_S(MIXED).s_value == pytest.approx(0.0, abs=1e-12)


def test_state_fidelity_is_one_for_identical_states(analysis: AnalysisService) -> None:
    rho = depolarize(BELL, 0.8)
    assert analysis.state_fidelity(rho, rho) == pytest.approx(1.0, abs=1e-6)
    assert analysis.state_fidelity(BELL, MIXED) == pytest.approx(0.25, abs=1e-4)


def test_analyzer_density_matrix_on_photonic_bell_pair(engine: FockEngine, analysis: AnalysisService) -> None:
    amplitude = 1 / math.sqrt(2)
    photons = PureFockState.from_terms(
        [
            (amplitude, {ModeId(path=path, polarization=Polarization.H): 1 for path in "ab"}),
            (amplitude, {ModeId(path=path, polarization=Polarization.V): 1 for path in "ab"}),
        ]
    )
    rho, mass = analysis.analyzer_density_matrix(engine, MixedFockState.pure(photons), ("a", "b"), (IDEAL_DETECTOR, IDEAL_DETECTOR))
    assert analysis.fidelity_phi_plus(rho) == pytest.approx(1.0, abs=1e-9)
    assert mass == pytest.approx(0.25)


def test_linear_inversion_recovers_state(analysis: AnalysisService) -> None:
    rho = depolarize(BELL, 0.8)
    records = analysis.synthetic_records(rho, 1000.0)
    assert analysis.linear_inversion(records).trace_distance(rho) < 1e-8


def test_mle_tomography_recovers_depolarized_state(analysis: AnalysisService) -> None:
    rho = depolarize(BELL, 0.8)
    result = analysis.mle_tomography(analysis.synthetic_records(rho, 1000.0))
    assert analysis.fidelity_phi_plus(result.rho) == pytest.approx(0.85, abs=5e-3)
    assert result.history[-1] <= result.history[0]


def test_mle_tomography_on_poisson_counts_stays_physical(analysis: AnalysisService) -> None:
    rho = depolarize(BELL, 0.9)
    records = analysis.synthetic_records(rho, 500.0, rng=np.random.default_rng(3))
    result = analysis.mle_tomography(records)
    assert np.linalg.eigvalsh(result.rho.matrix).min() > -1e-9
    assert analysis.fidelity_phi_plus(result.rho) == pytest.approx(0.925, abs=0.05)


def test_tomography_requires_complete_settings(analysis: AnalysisService) -> None:
    records = analysis.synthetic_records(BELL, 1000.0, labels=TOMOGRAPHY_LABELS[:15])
    with pytest.raises(TomographyError):
        analysis.mle_tomography(records)


def test_tomography_rejects_all_zero_counts(analysis: AnalysisService) -> None:
    records = analysis.synthetic_records(BELL, 0.0)
    with pytest.raises(TomographyError):
        analysis.linear_inversion(records)


def test_witness_from_counts_matches_exact_expectation(analysis: AnalysisService) -> None:
    rho = depolarize(BELL, 0.75, 0.9)
    records = analysis.synthetic_records(rho, 10_000.0, labels=WITNESS_LABELS)
    assert analysis.witness_from_counts(records) == pytest.approx(analysis.witness_expectation(rho), abs=1e-9)
    assert analysis.fidelity_from_counts(records) == pytest.approx(analysis.fidelity_phi_plus(rho), abs=1e-9)


def test_witness_from_counts_names_missing_settings(analysis: AnalysisService) -> None:
    records = analysis.synthetic_records(BELL, 100.0, labels=WITNESS_LABELS[:-1])
    with pytest.raises(TomographyError, match="LL"):
        analysis.witness_from_counts(records)


def test_poisson_error_bars(analysis: AnalysisService) -> None:
    records = analysis.synthetic_records(depolarize(BELL, 0.8), 400.0, labels=WITNESS_LABELS)
    spread = analysis.poisson_error_bars(records, analysis.fidelity_from_counts, n_trials=200, seed=1)
    assert 0.0 < spread < 0.05
    with pytest.raises(ValueError):
        analysis.poisson_error_bars(records, analysis.fidelity_from_counts, n_trials=10)


def test_chsh_respects_classical_and_quantum_bounds(analysis: AnalysisService) -> None:
    product = TwoQubitDensityMatrix.from_ket(np.kron(KETS["H"], KETS["H"]))
    assert abs(analysis.chsh_S(product).s_value) <= 2.0 + 1e-12
    rng = np.random.default_rng(8)
    for _ in range(20):
        ket = rng.normal(size=4) + 1j * rng.normal(size=4)
        assert abs(analysis.chsh_S(TwoQubitDensityMatrix.from_ket(ket)).s_value) <= 2 * math.sqrt(2) + 1e-9


def test_bell_pairs_regroup_into_a_sum_of_bell_pairs() -> None:
    """Φ⁺₁₂Φ⁺₃₄ = ½ Σ_B B₁₄B₂₃ over the four Bell states."""
    s = 1 / math.sqrt(2)
    bell = {
        "phi+": np.array([[s, 0], [0, s]]),
        "phi-": np.array([[s, 0], [0, -s]]),
        "psi+": np.array([[0, s], [s, 0]]),
        "psi-": np.array([[0, s], [-s, 0]]),
    }
    paired = np.einsum("ab,cd->abcd", bell["phi+"], bell["phi+"])
    swapped = 0.5 * sum(np.einsum("ad,bc->abcd", b, b) for b in bell.values())
    assert np.allclose(paired, swapped, atol=1e-12)


def test_witness_is_non_negative_on_product_states(analysis: AnalysisService) -> None:
    rng = np.random.default_rng(21)
    for _ in range(10_000):
        a = rng.normal(size=2) + 1j * rng.normal(size=2)
        b = rng.normal(size=2) + 1j * rng.normal(size=2)
        rho = TwoQubitDensityMatrix.from_ket(np.kron(a, b))
        assert analysis.witness_expectation(rho) >= -1e-10


def test_fidelity_matches_pauli_correlations_on_random_states(analysis: AnalysisService) -> None:
    rng = np.random.default_rng(5)
    pauli = {
        "X": np.array([[0, 1], [1, 0]], dtype=complex),
        "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
        "Z": np.diag([1.0, -1.0]).astype(complex),
    }
    for _ in range(1_000):
        g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        rho = TwoQubitDensityMatrix.from_array(g @ g.conj().T)
        xx, yy, zz = (np.trace(np.kron(pauli[k], pauli[k]) @ rho.matrix).real for k in "XYZ")
        assert analysis.fidelity_phi_plus(rho) == pytest.approx((1 + xx - yy + zz) / 4, abs=1e-12)


def test_poisson_error_bars_shrink_with_root_of_counts(analysis: AnalysisService) -> None:
    rho = depolarize(BELL, 0.8)
    spreads = [
        analysis.poisson_error_bars(
            analysis.synthetic_records(rho, counts, labels=WITNESS_LABELS), analysis.fidelity_from_counts, n_trials=400, seed=4
        )
        for counts in (400.0, 40_000.0)
    ]
    assert spreads[0] / spreads[1] == pytest.approx(10.0, rel=0.15)


def test_mle_tomography_on_noiseless_phi_plus(analysis: AnalysisService) -> None:
    result = analysis.mle_tomography(analysis.synthetic_records(BELL, 1000.0))
    assert analysis.fidelity_phi_plus(result.rho) >= 0.999


@pytest.mark.parametrize("visibility", [1.0, 0.8, 0.5, 0.0])
def test_dephasing_scales_only_the_coherence(analysis: AnalysisService, visibility: float) -> None:
    rho = dephase(BELL, visibility)
    assert analysis.fidelity_phi_plus(rho) == pytest.approx((1 + visibility) / 2)
    assert analysis.pauli_correlation(rho, "Z", "Z") == pytest.approx(1.0)
    assert analysis.pauli_correlation(rho, "X", "X") == pytest.approx(visibility)


def test_dephasing_commutes_with_depolarization(analysis: AnalysisService) -> None:
    first = dephase(depolarize(BELL, 0.9, 0.7), 0.6)
    second = depolarize(dephase(BELL, 0.6), 0.9, 0.7)
    assert first.trace_distance(second) < 1e-12


def test_records_from_csv_reads_angles_and_labels(analysis: AnalysisService, tmp_path) -> None:
    path = tmp_path / "counts.csv"
    path.write_text(
        "setting,qwp1_deg,hwp1_deg,qwp2_deg,hwp2_deg,port1,port2,counts,duration_s\n"
        "HH,0,0,0,0,H,H,120,2.0\n"
        "DD,,,,,,,80,\n"
        ",45,22.5,45,22.5,V,H,33,1.5\n"
    )
    records = analysis.records_from_csv(path)
    assert [record.counts for record in records] == [120.0, 80.0, 33.0]
    assert records[0].duration_s == 2.0 and records[1].duration_s == 1.0
    assert records[1].setting.hwp1_deg == pytest.approx(ANALYZER_ANGLES["D"][1])
    assert records[2].setting.label is None and records[2].setting.port1 == "V"


def test_records_from_csv_names_the_bad_line(analysis: AnalysisService, tmp_path) -> None:
    path = tmp_path / "counts.csv"
    path.write_text("setting,qwp1_deg,hwp1_deg,qwp2_deg,hwp2_deg,counts\nHH,0,0,0,0,10\n,,,,,5\n")
    with pytest.raises(TomographyError, match="line 3"):
        analysis.records_from_csv(path)
    with pytest.raises(TomographyError, match="not found"):
        analysis.records_from_csv(tmp_path / "missing.csv")
