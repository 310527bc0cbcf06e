"""Versioned scenario file: every module spec plus run parameters."""
from __future__ import annotations

from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from app.domain.models.bsm_models import BsmCircuit
from app.domain.models.fock_models import ThresholdDetectorSpec
from app.domain.models.link_models import DutyCycleSpec, LinkTimingSpec, NodeSpec, RateBudget
from app.domain.models.memory_models import NODE_A_MEMORY, NODE_B_MEMORY, MemorySpec
from app.domain.models.source_models import SpdcSourceSpec

SCHEMA_VERSION = 1


class CalibrationSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    target_g2: float = Field(default=50.0, gt=1.0)
    fidelity_a: Optional[float] = Field(default=0.926, ge=0.25, le=1.0)
    fidelity_b: Optional[float] = Field(default=0.933, ge=0.25, le=1.0)
    # fourfold heralded fidelity that fixes the BSM interference visibility; None keeps the circuit value
    heralded_fidelity_target: Optional[float] = Field(default=0.769, gt=0.25, le=1.0)


class RunSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = 2021
    cycles: int = Field(default=20_000, ge=1)
    modes: int = Field(default=4, ge=1)
    jobs: int = Field(default=1, ge=1, le=64)
    importance_boost: Optional[float] = Field(default=None, gt=0.0)
    log_cycles: int = Field(default=50, ge=0)
    g2_grid: List[float] = Field(default_factory=lambda: [40.0, 50.0, 113.0])
    pump_grid: List[float] = Field(default_factory=lambda: [0.001, 0.002, 0.004, 0.006, 0.008, 0.01, 0.012, 0.014, 0.017, 0.02])
    mode_grid: List[int] = Field(default_factory=lambda: [1, 2, 4, 8, 16, 32, 56])


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    schema_version: Literal[1] = SCHEMA_VERSION
    name: str = "reference-defaults"
    source_a: SpdcSourceSpec = Field(default_factory=lambda: SpdcSourceSpec(memory_path="1", bsm_path="2"))
    source_b: SpdcSourceSpec = Field(default_factory=lambda: SpdcSourceSpec(memory_path="4", bsm_path="3"))
    memory_a: MemorySpec = Field(default_factory=lambda: NODE_A_MEMORY)
    memory_b: MemorySpec = Field(default_factory=lambda: NODE_B_MEMORY)
    bsm_detectors: BsmCircuit = Field(default_factory=BsmCircuit)
    analyzer_detector: ThresholdDetectorSpec = Field(default_factory=lambda: ThresholdDetectorSpec(dark_count_prob_per_window=6e-7))
    timing: LinkTimingSpec = Field(default_factory=LinkTimingSpec)
    duty: DutyCycleSpec = Field(default_factory=DutyCycleSpec)
    budget: RateBudget = Field(default_factory=RateBudget)
    calibration: CalibrationSpec = Field(default_factory=CalibrationSpec)
    run: RunSpec = Field(default_factory=RunSpec)

    def node_a(self) -> NodeSpec:
        return NodeSpec(
            name="A",
            source=self.source_a,
            memory=self.memory_a,
            target_g2=self.calibration.target_g2,
            target_fidelity=self.calibration.fidelity_a,
        )

    def node_b(self) -> NodeSpec:
        return NodeSpec(
            name="B",
            source=self.source_b,
            memory=self.memory_b,
            target_g2=self.calibration.target_g2,
            target_fidelity=self.calibration.fidelity_b,
        )
