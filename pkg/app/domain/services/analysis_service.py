"""Polarization-state verification: projectors, witness, fidelity, CHSH and maximum-likelihood tomography."""
from __future__ import annotations

import math
from logging import Logger
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, optimize

from app.domain.models.analysis_models import (
    ChshResult,
    CountRecord,
    MeasurementSetting,
    TwoQubitDensityMatrix,
)
from app.domain.models.errors import LinkSimError, TomographyError, ZeroProbabilityError
from app.domain.models.fock_models import (
    ClickPattern,
    DetectorBinding,
    MixedFockState,
    ThresholdDetectorSpec,
    Waveplate,
    path_modes,
)
from app.domain.services.fock_engine import FockEngine
from app.utils.file_utils import read_csv_rows

_SQ2 = 1 / math.sqrt(2)

KETS: Dict[str, np.ndarray] = {
    "H": np.array([1, 0], dtype=complex),
    "V": np.array([0, 1], dtype=complex),
    "D": np.array([_SQ2, _SQ2], dtype=complex),
    "A": np.array([_SQ2, -_SQ2], dtype=complex),
    "R": np.array([_SQ2, -1j * _SQ2], dtype=complex),
    "L": np.array([_SQ2, 1j * _SQ2], dtype=complex),
}

# (QWP, HWP) angles that route each polarization to the analyzer's H port
ANALYZER_ANGLES: Dict[str, Tuple[float, float]] = {
    "H": (0.0, 0.0),
    "V": (0.0, 45.0),
    "D": (45.0, 22.5),
    "A": (45.0, 67.5),
    "R": (0.0, 22.5),
    "L": (0.0, 67.5),
}

TOMOGRAPHY_LABELS = ("HH", "HV", "VV", "VH", "RH", "RV", "DV", "DH", "DR", "DD", "RD", "HD", "VD", "VL", "HL", "RL")
WITNESS_LABELS = ("HH", "HV", "VH", "VV", "DD", "DA", "AD", "AA", "RR", "RL", "LR", "LL")
ANGLE_COLUMNS = ("qwp1_deg", "hwp1_deg", "qwp2_deg", "hwp2_deg")

# (plus, minus) eigenstates of sigma_x, sigma_y, sigma_z
PAULI_BASES: Dict[str, Tuple[str, str]] = {"X": ("D", "A"), "Y": ("L", "R"), "Z": ("H", "V")}

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

PHI_PLUS = np.array([_SQ2, 0, 0, _SQ2], dtype=complex)

# (QWP, HWP) per arm
CHSH_SETTINGS = {
    "a": (0.0, 0.0),
    "a_prime": (45.0, 22.5),
    "b": (22.5, 11.25),
    "b_prime": (67.5, 78.75),
}


def analyzer_jones(qwp_deg: float, hwp_deg: float) -> np.ndarray:
    """Jones matrix of QWP followed by HWP."""
    return Waveplate(angle_deg=hwp_deg, retardance="half").jones() @ Waveplate(angle_deg=qwp_deg, retardance="quarter").jones()


def projector_from_setting(qwp_deg: float, hwp_deg: float, port: str = "H") -> np.ndarray:
    """Single-qubit projector selected by the waveplates and one PBS port."""
    jones = analyzer_jones(qwp_deg, hwp_deg)
    port_ket = KETS[port]
    selected = jones.conj().T @ port_ket
    return np.outer(selected, selected.conj())


def setting_for(label: str) -> MeasurementSetting:
    """Two-arm analyzer setting for a label such as 'DR'."""
    first, second = ANALYZER_ANGLES[label[0]], ANALYZER_ANGLES[label[1]]
    return MeasurementSetting(label=label, qwp1_deg=first[0], hwp1_deg=first[1], qwp2_deg=second[0], hwp2_deg=second[1])


def joint_projector(setting: MeasurementSetting) -> np.ndarray:
    return np.kron(
        projector_from_setting(setting.qwp1_deg, setting.hwp1_deg, setting.port1),
        projector_from_setting(setting.qwp2_deg, setting.hwp2_deg, setting.port2),
    )


def _pair_projector(label: str) -> np.ndarray:
    ket = np.kron(KETS[label[0]], KETS[label[1]])
    return np.outer(ket, ket.conj())


WITNESS_OPERATOR = 0.5 * (
    _pair_projector("HV")
    + _pair_projector("VH")
    + _pair_projector("DA")
    + _pair_projector("AD")
    - _pair_projector("RL")
    - _pair_projector("LR")
)

_HERMITIAN_BASIS = [np.kron(PAULI[a], PAULI[b]) for a in "IXYZ" for b in "IXYZ"]


def depolarize(rho: TwoQubitDensityMatrix, visibility_a: float = 1.0, visibility_b: float = 1.0) -> TwoQubitDensityMatrix:
    """Isotropic depolarization of each qubit: ρ → vρ + (1−v)·(I/2 ⊗ Tr₁ρ)."""
    matrix = rho.matrix
    for qubit, visibility in ((0, visibility_a), (1, visibility_b)):
        if visibility >= 1.0:
            continue
        twirled = np.zeros_like(matrix)
        for name in "IXYZ":
            op = np.kron(PAULI[name], PAULI["I"]) if qubit == 0 else np.kron(PAULI["I"], PAULI[name])
            twirled += op @ matrix @ op.conj().T
        matrix = visibility * matrix + (1 - visibility) * twirled / 4
    return TwoQubitDensityMatrix.from_array(matrix)


def dephase(rho: TwoQubitDensityMatrix, visibility: float = 1.0) -> TwoQubitDensityMatrix:
    """Partial two-photon interference at the BSM: ρ → (1+V)/2·ρ + (1−V)/2·(Z⊗I)ρ(Z⊗I).

    Distinguishable photons herald Φ⁺ and Φ⁻ alike, so only the HH/VV coherence is lost.
    """
    if visibility >= 1.0:
        return rho
    flip = np.kron(PAULI["Z"], PAULI["I"])
    matrix = (1 + visibility) / 2 * rho.matrix + (1 - visibility) / 2 * flip @ rho.matrix @ flip
    return TwoQubitDensityMatrix.from_array(matrix)


class MleResult:
    """Reconstructed state plus the negative log-likelihood trace of the optimizer."""

    def __init__(self, rho: TwoQubitDensityMatrix, history: List[float], iterations: int, converged: bool) -> None:
        self.rho = rho
        self.history = history
        self.iterations = iterations
        self.converged = converged


class AnalysisService:
    """Evaluates witnesses, fidelities, CHSH values and tomographic reconstructions."""

    def __init__(self, logger: Logger, *, tolerance: float = 1e-10, max_iterations: int = 10_000) -> None:
        self._logger = logger
        self._tolerance = tolerance
        self._max_iterations = max_iterations

    # ------------------------------------------------------------------
    # figures of merit
    # ------------------------------------------------------------------
    def witness_expectation(self, rho: TwoQubitDensityMatrix) -> float:
        return float(np.trace(WITNESS_OPERATOR @ rho.matrix).real)

    def fidelity_phi_plus(self, rho: TwoQubitDensityMatrix) -> float:
        """Overlap with Φ⁺, cross-checked against the Pauli-correlation route."""
        direct = float((PHI_PLUS.conj() @ rho.matrix @ PHI_PLUS).real)
        pauli = self.fidelity_from_correlations(rho)
        if abs(direct - pauli) > self._tolerance:
            raise LinkSimError(f"Fidelity routes disagree: {direct} vs {pauli}")
        return direct

    def fidelity_from_correlations(self, rho: TwoQubitDensityMatrix) -> float:
        xx = self.pauli_correlation(rho, "X", "X")
        yy = self.pauli_correlation(rho, "Y", "Y")
        zz = self.pauli_correlation(rho, "Z", "Z")
        return (1 + xx - yy + zz) / 4

    @staticmethod
    def pauli_correlation(rho: TwoQubitDensityMatrix, first: str, second: str) -> float:
        return float(np.trace(np.kron(PAULI[first], PAULI[second]) @ rho.matrix).real)

    @staticmethod
    def state_fidelity(rho: TwoQubitDensityMatrix, sigma: TwoQubitDensityMatrix) -> float:
        """Uhlmann fidelity (Tr√(√ρ σ √ρ))²."""
        root = linalg.sqrtm(rho.matrix)
        inner = linalg.sqrtm(root @ sigma.matrix @ root)
        return float(min(np.trace(inner).real ** 2, 1.0))

    def correlation(self, rho: TwoQubitDensityMatrix, setting_a: Tuple[float, float], setting_b: Tuple[float, float]) -> float:
        """E = p(++) − p(+−) − p(−+) + p(−−) for two (QWP, HWP) analyzers."""
        total = 0.0
        for port_a, sign_a in (("H", 1), ("V", -1)):
            for port_b, sign_b in (("H", 1), ("V", -1)):
                projector = np.kron(
                    projector_from_setting(*setting_a, port=port_a),
                    projector_from_setting(*setting_b, port=port_b),
                )
                total += sign_a * sign_b * float(np.trace(projector @ rho.matrix).real)
        return total

    def chsh_S(
        self,
        rho: TwoQubitDensityMatrix,
        settings: Optional[Mapping[str, Tuple[float, float]]] = None,
    ) -> ChshResult:
        chosen = dict(CHSH_SETTINGS if settings is None else settings)
        a, a_prime, b, b_prime = chosen["a"], chosen["a_prime"], chosen["b"], chosen["b_prime"]
        correlations = {
            "E(a,b)": self.correlation(rho, a, b),
            "E(a,b')": self.correlation(rho, a, b_prime),
            "E(a',b)": self.correlation(rho, a_prime, b),
            "E(a',b')": self.correlation(rho, a_prime, b_prime),
        }
        s_value = abs(correlations["E(a,b)"] + correlations["E(a,b')"] + correlations["E(a',b)"] - correlations["E(a',b')"])
        return ChshResult(correlations=correlations, s_value=s_value)

    # ------------------------------------------------------------------
    # analyzers on Fock states
    # ------------------------------------------------------------------
    def analyzer_density_matrix(
        self,
        engine: FockEngine,
        state: MixedFockState,
        arms: Tuple[str, str],
        detectors: Tuple[ThresholdDetectorSpec, ThresholdDetectorSpec],
    ) -> Tuple[TwoQubitDensityMatrix, float]:
        """Rebuild the coincidence-conditioned polarization state seen by two QWP/HWP/PBS analyzers.

        Each arm's transmitted port feeds a threshold detector, so multi-photon terms and dark
        counts enter exactly as they would in the lab. Returns the state and the mean
        coincidence probability per basis pair.
        """
        probabilities: Dict[Tuple[str, str], float] = {}
        for first in ANALYZER_ANGLES:
            for second in ANALYZER_ANGLES:
                rotated = state
                for arm, label in ((arms[0], first), (arms[1], second)):
                    qwp, hwp = ANALYZER_ANGLES[label]
                    modes = path_modes(arm)
                    rotated = engine.apply_element(rotated, Waveplate(angle_deg=qwp, retardance="quarter"), modes)
                    rotated = engine.apply_element(rotated, Waveplate(angle_deg=hwp, retardance="half"), modes)
                bindings = {
                    "a": DetectorBinding(modes=(path_modes(arms[0])[0],), spec=detectors[0]),
                    "b": DetectorBinding(modes=(path_modes(arms[1])[0],), spec=detectors[1]),
                }
                measurement = engine.measure_threshold(rotated, bindings, keep_states=False)
                probabilities[(first, second)] = measurement.probability(ClickPattern.of("a", "b"))
        return self.density_from_projections(probabilities)

    def density_from_projections(self, probabilities: Mapping[Tuple[str, str], float]) -> Tuple[TwoQubitDensityMatrix, float]:
        """Linear inversion from joint click probabilities over the six analyzer states per arm."""
        correlation: Dict[Tuple[str, str], float] = {}
        marginal_a: Dict[str, List[float]] = {name: [] for name in PAULI_BASES}
        marginal_b: Dict[str, List[float]] = {name: [] for name in PAULI_BASES}
        masses = []
        for name_a, (plus_a, minus_a) in PAULI_BASES.items():
            for name_b, (plus_b, minus_b) in PAULI_BASES.items():
                pp = probabilities[(plus_a, plus_b)]
                pm = probabilities[(plus_a, minus_b)]
                mp = probabilities[(minus_a, plus_b)]
                mm = probabilities[(minus_a, minus_b)]
                total = pp + pm + mp + mm
                if total <= 0.0:
                    raise ZeroProbabilityError(f"No coincidences in basis {name_a}{name_b}")
                masses.append(total / 4)
                correlation[(name_a, name_b)] = (pp - pm - mp + mm) / total
                marginal_a[name_a].append((pp + pm - mp - mm) / total)
                marginal_b[name_b].append((pp - pm + mp - mm) / total)
        matrix = np.kron(PAULI["I"], PAULI["I"]).astype(complex)
        for name in PAULI_BASES:
            matrix += float(np.mean(marginal_a[name])) * np.kron(PAULI[name], PAULI["I"])
            matrix += float(np.mean(marginal_b[name])) * np.kron(PAULI["I"], PAULI[name])
        for (name_a, name_b), value in correlation.items():
            matrix += value * np.kron(PAULI[name_a], PAULI[name_b])
        rho = TwoQubitDensityMatrix.from_array(matrix / 4, clip_negative=True)
        return rho, float(np.mean(masses))

    # ------------------------------------------------------------------
    # tomography
    # ------------------------------------------------------------------
    @staticmethod
    def synthetic_records(
        rho: TwoQubitDensityMatrix,
        counts_per_setting: float,
        *,
        labels: Sequence[str] = TOMOGRAPHY_LABELS,
        rng: Optional[np.random.Generator] = None,
        duration_s: float = 1.0,
    ) -> List[CountRecord]:
        """Expected (or Poisson-sampled when rng is given) counts for each labelled setting."""
        records = []
        for label in labels:
            setting = setting_for(label)
            mean = counts_per_setting * max(float(np.trace(joint_projector(setting) @ rho.matrix).real), 0.0)
            counts = float(rng.poisson(mean)) if rng is not None else mean
            records.append(CountRecord(setting=setting, counts=counts, duration_s=duration_s))
        return records

    def records_from_csv(self, file_path: Path) -> List[CountRecord]:
        """Count records from a CSV with setting, qwp1_deg, hwp1_deg, qwp2_deg, hwp2_deg, counts and duration_s.

        Blank angle cells fall back to the analyzer angles of the setting label; the
        optional port1/port2 columns select the PBS output read on each arm.
        """
        if not file_path.is_file():
            raise TomographyError(f"Count file not found: {file_path}")
        rows = read_csv_rows(file_path)
        if not rows:
            raise TomographyError(f"No count records in {file_path}")
        records = []
        for line, row in enumerate(rows, start=2):
            try:
                label = (row.get("setting") or "").strip() or None
                angles = {name: (row.get(name) or "").strip() for name in ANGLE_COLUMNS}
                if all(angles.values()):
                    setting = MeasurementSetting(
                        label=label,
                        port1=(row.get("port1") or "H").strip(),
                        port2=(row.get("port2") or "H").strip(),
                        **{name: float(value) for name, value in angles.items()},
                    )
                elif label is not None:
                    setting = setting_for(label)
                else:
                    raise ValueError("needs a setting label or all four waveplate angles")
                duration = (row.get("duration_s") or "").strip()
                records.append(
                    CountRecord(setting=setting, counts=float(row["counts"]), duration_s=float(duration) if duration else 1.0)
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise TomographyError(f"{file_path} line {line}: {exc}") from exc
        self._logger.info("Read %d count records from %s", len(records), file_path)
        return records

    def linear_inversion(self, records: Sequence[CountRecord]) -> TwoQubitDensityMatrix:
        design, counts = self._design(records)
        coefficients, *_ = np.linalg.lstsq(design, counts, rcond=None)
        matrix = sum(c * basis for c, basis in zip(coefficients, _HERMITIAN_BASIS))
        return TwoQubitDensityMatrix.from_array(matrix, clip_negative=True)

    def mle_tomography(self, records: Sequence[CountRecord]) -> MleResult:
        """Maximum-likelihood state under Poisson statistics, ρ ∝ L L† with L lower-triangular."""
        design, counts = self._design(records)
        projectors = [joint_projector(record.setting) for record in records]
        scale = counts.mean()
        observed = counts / scale

        seed_rho = self.linear_inversion(records).matrix
        seed_rho = 0.999 * seed_rho + 0.001 * np.eye(4) / 4
        expected_seed = np.array([np.trace(p @ seed_rho).real for p in projectors])
        amplitude = observed.sum() / expected_seed.sum()
        initial = _cholesky_params(np.linalg.cholesky(amplitude * seed_rho))
        stacked = np.array(projectors)

        def negative_log_likelihood(params: np.ndarray) -> float:
            lower = _lower_from_params(params)
            rho = lower @ lower.conj().T
            expected = np.einsum("kij,ji->k", stacked, rho).real
            expected = np.clip(expected, 1e-300, None)
            return float(np.sum(expected - observed * np.log(expected)))

        history = [negative_log_likelihood(initial)]

        def record(params: np.ndarray) -> None:
            history.append(negative_log_likelihood(params))

        result = optimize.minimize(
            negative_log_likelihood,
            initial,
            method="BFGS",
            callback=record,
            options={"maxiter": self._max_iterations, "gtol": 1e-10},
        )
        lower = _lower_from_params(result.x)
        rho = TwoQubitDensityMatrix.from_array(lower @ lower.conj().T)
        gains = np.diff(history)
        converged = bool(result.success or (len(gains) and abs(gains[-1]) < 1e-10))
        self._logger.debug("MLE finished after %d iterations (converged=%s)", result.nit, converged)
        return MleResult(rho=rho, history=history, iterations=int(result.nit), converged=converged)

    def _design(self, records: Sequence[CountRecord]) -> Tuple[np.ndarray, np.ndarray]:
        if len(records) < 16:
            raise TomographyError(f"Tomography needs 16 settings, got {len(records)}")
        counts = np.array([record.counts for record in records], dtype=float)
        if counts.sum() <= 0.0:
            raise TomographyError("All counts are zero")
        design = np.array(
            [[np.trace(joint_projector(record.setting) @ basis).real for basis in _HERMITIAN_BASIS] for record in records]
        )
        if np.linalg.matrix_rank(design, tol=1e-9) < 16:
            raise TomographyError("Settings are not informationally complete")
        return design, counts

    # ------------------------------------------------------------------
    # count-based estimators
    # ------------------------------------------------------------------
    @staticmethod
    def _counts_by_label(records: Iterable[CountRecord], required: Sequence[str]) -> Dict[str, float]:
        table = {record.setting.label: record.counts for record in records if record.setting.label}
        missing = [label for label in required if label not in table]
        if missing:
            raise TomographyError(f"Missing settings: {', '.join(missing)}")
        return table

    def witness_from_counts(self, records: Sequence[CountRecord]) -> float:
        table = self._counts_by_label(records, WITNESS_LABELS)

        def joint(first: str, second: str, basis: Tuple[str, str]) -> float:
            total = sum(table[a + b] for a in basis for b in basis)
            if total <= 0:
                raise ZeroProbabilityError(f"No counts in basis {basis}")
            return table[first + second] / total

        return 0.5 * (
            joint("H", "V", ("H", "V"))
            + joint("V", "H", ("H", "V"))
            + joint("D", "A", ("D", "A"))
            + joint("A", "D", ("D", "A"))
            - joint("R", "L", ("R", "L"))
            - joint("L", "R", ("R", "L"))
        )

    def fidelity_from_counts(self, records: Sequence[CountRecord]) -> float:
        return 0.5 - self.witness_from_counts(records)

    def poisson_error_bars(
        self,
        records: Sequence[CountRecord],
        estimator: Callable[[Sequence[CountRecord]], float],
        n_trials: int = 1000,
        seed: int = 0,
    ) -> float:
        """Standard deviation of the estimator over Poisson resamplings of every count."""
        if n_trials < 100:
            raise ValueError("Poisson error bars need at least 100 trials")
        rng = np.random.default_rng(seed)
        values = []
        for _ in range(n_trials):
            resampled = [record.model_copy(update={"counts": float(rng.poisson(record.counts))}) for record in records]
            values.append(estimator(resampled))
        return float(np.std(values, ddof=1))


def _cholesky_params(lower: np.ndarray) -> np.ndarray:
    params = [lower[i, i].real for i in range(4)]
    for i in range(1, 4):
        for j in range(i):
            params.extend([lower[i, j].real, lower[i, j].imag])
    return np.array(params)


def _lower_from_params(params: np.ndarray) -> np.ndarray:
    lower = np.zeros((4, 4), dtype=complex)
    for i in range(4):
        lower[i, i] = params[i]
    cursor = 4
    for i in range(1, 4):
        for j in range(i):
            lower[i, j] = params[cursor] + 1j * params[cursor + 1]
            cursor += 2
    return lower
