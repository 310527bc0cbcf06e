"""Two-qubit polarization states, analyzer settings and count records."""
from __future__ import annotations

from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.domain.models.errors import ZeroProbabilityError

BASIS_LABELS = ("HH", "HV", "VH", "VV")


class TwoQubitDensityMatrix(BaseModel):
    """4×4 density matrix in the {HH, HV, VH, VV} basis."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    matrix: np.ndarray
    tolerance: float = Field(default=1e-10, exclude=True)

    @field_validator("matrix", mode="before")
    @classmethod
    def _as_complex(cls, value):
        array = np.asarray(value, dtype=complex)
        if array.shape != (4, 4):
            raise ValueError(f"Expected a 4x4 matrix, got {array.shape}")
        return array

    @model_validator(mode="after")
    def _check_physical(self) -> "TwoQubitDensityMatrix":
        matrix, tol = self.matrix, self.tolerance
        if not np.allclose(matrix, matrix.conj().T, atol=tol):
            raise ValueError("Density matrix is not Hermitian")
        if abs(np.trace(matrix).real - 1.0) > tol:
            raise ValueError(f"Density matrix trace is {np.trace(matrix).real}")
        if np.linalg.eigvalsh((matrix + matrix.conj().T) / 2).min() < -tol:
            raise ValueError("Density matrix is not positive semidefinite")
        return self

    @classmethod
    def from_array(cls, array: np.ndarray, *, renormalize: bool = True, clip_negative: bool = False) -> "TwoQubitDensityMatrix":
        """Hermitize, optionally clip negative eigenvalues, and normalize the trace."""
        matrix = np.asarray(array, dtype=complex)
        matrix = (matrix + matrix.conj().T) / 2
        if clip_negative:
            values, vectors = np.linalg.eigh(matrix)
            values = np.clip(values, 0.0, None)
            matrix = (vectors * values) @ vectors.conj().T
        trace = np.trace(matrix).real
        if renormalize:
            if trace <= 0.0:
                raise ZeroProbabilityError("Density matrix has zero trace")
            matrix = matrix / trace
        return cls(matrix=matrix)

    @classmethod
    def from_ket(cls, ket: np.ndarray) -> "TwoQubitDensityMatrix":
        vector = np.asarray(ket, dtype=complex)
        vector = vector / np.linalg.norm(vector)
        return cls(matrix=np.outer(vector, vector.conj()))

    @classmethod
    def maximally_mixed(cls) -> "TwoQubitDensityMatrix":
        return cls(matrix=np.eye(4) / 4)

    def to_json_dict(self) -> Dict[str, List[List[float]]]:
        return {
            "basis": list(BASIS_LABELS),
            "real": self.matrix.real.round(12).tolist(),
            "imag": self.matrix.imag.round(12).tolist(),
        }

    def trace_distance(self, other: "TwoQubitDensityMatrix") -> float:
        return float(0.5 * np.abs(np.linalg.eigvalsh(self.matrix - other.matrix)).sum())


class ProjectionResult(BaseModel):
    """Post-selected polarization state and the probability mass it was built from."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    rho: TwoQubitDensityMatrix
    postselected_mass: float = Field(ge=0.0)
    discarded_mass: float = Field(ge=0.0)


class MeasurementSetting(BaseModel):
    """QWP and HWP angles per arm, followed by a PBS read on the H or V port."""

    model_config = ConfigDict(frozen=True)

    label: Optional[str] = None
    qwp1_deg: float = Field(default=0.0, ge=0.0, lt=180.0)
    hwp1_deg: float = Field(default=0.0, ge=0.0, lt=180.0)
    qwp2_deg: float = Field(default=0.0, ge=0.0, lt=180.0)
    hwp2_deg: float = Field(default=0.0, ge=0.0, lt=180.0)
    port1: Literal["H", "V"] = "H"
    port2: Literal["H", "V"] = "H"


class CountRecord(BaseModel):
    """Coincidence counts accumulated for one analyzer setting."""

    model_config = ConfigDict(frozen=True)

    setting: MeasurementSetting
    counts: float = Field(ge=0.0)
    duration_s: float = Field(default=1.0, gt=0.0)


class ChshResult(BaseModel):
    correlations: Dict[str, float]
    s_value: float
