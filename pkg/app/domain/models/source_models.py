"""SPDC source parameters and pair statistics."""
from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.domain.models.analysis_models import TwoQubitDensityMatrix


class SpdcSourceSpec(BaseModel):
    """Type-II SPDC source followed by the post-selecting polarization interferometer."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    pair_prob_per_pulse: float = Field(default=0.012, ge=0.0, le=0.2)
    repetition_rate_hz: float = Field(default=8.0e7, gt=0.0)
    heralding_efficiency: float = Field(default=0.083, ge=0.0, le=1.0, description="Collection into the analysis fibre, excluding the detector")
    intrinsic_visibility: float = Field(default=1.0, ge=0.0, le=1.0)
    linewidth_ghz: float = Field(default=1.0, gt=0.0)
    max_pairs: int = Field(default=2, ge=0, le=2, description="Order of the two-mode-squeezed expansion")
    pump_power_coefficient: float = Field(default=1.0, gt=0.0, description="p per unit pump power")
    memory_path: str = "1"
    bsm_path: str = "2"

    @model_validator(mode="after")
    def _distinct_paths(self) -> "SpdcSourceSpec":
        if self.memory_path == self.bsm_path:
            raise ValueError("Source output paths must differ")
        return self

    def at_pump_power(self, power: float) -> "SpdcSourceSpec":
        """Affine pump-power mapping p = coefficient × power."""
        return self.model_copy(update={"pair_prob_per_pulse": self.pump_power_coefficient * power})

    def with_pair_probability(self, p: float) -> "SpdcSourceSpec":
        return self.model_copy(update={"pair_prob_per_pulse": p})


class PairStatistics(BaseModel):
    """Singles, coincidences and the zero-delay cross-correlation."""

    model_config = ConfigDict(frozen=True)

    p1: float = Field(ge=0.0, le=1.0)
    p2: float = Field(ge=0.0, le=1.0)
    p12: float = Field(ge=0.0, le=1.0)
    g2: float = Field(ge=0.0)
    window_ns: float = Field(gt=0.0)
    singles_rate_1_hz: float = Field(ge=0.0)
    singles_rate_2_hz: float = Field(ge=0.0)
    coincidence_rate_hz: float = Field(ge=0.0)

    @model_validator(mode="after")
    def _consistent_g2(self) -> "PairStatistics":
        expected = self.p12 / (self.p1 * self.p2)
        if abs(expected - self.g2) > 1e-9 * max(1.0, expected):
            raise ValueError("g2 does not match P12/(P1 P2)")
        return self


class SourceStateResult(BaseModel):
    """Post-selected source density matrix with the coincidence mass behind it."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    rho: TwoQubitDensityMatrix
    postselected_mass: float
    fidelity: float
    pair_prob_per_pulse: float
    visibility: float


class SourceCalibration(BaseModel):
    """Operating point and visibility solved for one node."""

    node: str
    target_g2: Optional[float] = None
    pair_prob_per_pulse: float
    target_fidelity: Optional[float] = None
    intrinsic_visibility: float
    achieved_fidelity: float
