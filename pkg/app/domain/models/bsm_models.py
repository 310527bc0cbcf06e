"""Bell-state-measurement circuit, herald rules and heralded-state results."""
from __future__ import annotations

from typing import Dict, FrozenSet, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.domain.models.analysis_models import TwoQubitDensityMatrix
from app.domain.models.fock_models import ClickPattern, OpticalElement, PolarizingBeamSplitter, ThresholdDetectorSpec, Waveplate

DETECTOR_LABELS = ("T1", "R1", "T2", "R2")


class BsmCircuit(BaseModel):
    """Type-II fusion gate: HWPs on both inputs and both outputs of a PBS, then one PBS per output."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    input_paths: Tuple[str, str] = ("2", "3")
    fusion_outputs: Tuple[str, str] = ("o1", "o2")
    detector: ThresholdDetectorSpec = Field(default_factory=lambda: ThresholdDetectorSpec(window_ns=2.0))
    detector_overrides: Dict[str, ThresholdDetectorSpec] = Field(default_factory=dict)
    # two-photon interference visibility of the photons meeting at the fusion PBS
    interference_visibility: float = Field(default=1.0, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _known_detectors(self) -> "BsmCircuit":
        unknown = set(self.detector_overrides) - set(DETECTOR_LABELS)
        if unknown:
            raise ValueError(f"Unknown BSM detectors: {sorted(unknown)}")
        return self

    def stages(self) -> List[Tuple[OpticalElement, Tuple[str, ...]]]:
        first, second = self.input_paths
        o1, o2 = self.fusion_outputs
        return [
            (Waveplate(angle_deg=22.5), (first,)),
            (Waveplate(angle_deg=22.5), (second,)),
            (PolarizingBeamSplitter(in_paths=(first, second), out_paths=(o1, o2)), (first, second)),
            (Waveplate(angle_deg=22.5), (o1,)),
            (Waveplate(angle_deg=22.5), (o2,)),
            (PolarizingBeamSplitter(in_paths=(o1,), out_paths=("T1", "R1")), (o1,)),
            (PolarizingBeamSplitter(in_paths=(o2,), out_paths=("T2", "R2")), (o2,)),
        ]

    def detector_for(self, label: str) -> ThresholdDetectorSpec:
        return self.detector_overrides.get(label, self.detector)

    def with_detector(self, detector: ThresholdDetectorSpec) -> "BsmCircuit":
        return self.model_copy(update={"detector": detector})


class HeraldRule(BaseModel):
    model_config = ConfigDict(frozen=True)

    outcome: str
    patterns: Tuple[FrozenSet[str], ...]

    def accepts(self, pattern: ClickPattern) -> bool:
        return pattern.clicked in self.patterns

    def click_patterns(self) -> List[ClickPattern]:
        return [ClickPattern(clicked=pattern) for pattern in self.patterns]


PHI_PLUS_RULE = HeraldRule(outcome="phi_plus", patterns=(frozenset({"T1", "R2"}), frozenset({"R1", "T2"})))
PSI_PLUS_RULE = HeraldRule(outcome="psi_plus", patterns=(frozenset({"T1", "T2"}), frozenset({"R1", "R2"})))


class BsmSuccessProbabilities(BaseModel):
    """Herald probabilities split by Bell outcome.

    ``useful`` counts heralds that leave exactly one excitation in each memory path.
    """

    phi_plus_useful: float
    psi_plus_useful: float
    phi_plus_raw: float
    psi_plus_raw: float

    @property
    def useful_total(self) -> float:
        return self.phi_plus_useful + self.psi_plus_useful


class HeraldedMemoryState(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    rho: TwoQubitDensityMatrix
    herald_probability: float = Field(ge=0.0)
    fourfold: bool
    spurious_fraction: float = Field(default=0.0, ge=0.0, le=1.0)
    fidelity: float
    effective_fidelity: float
    coincidence_probability: Optional[float] = None
    pattern_fidelities: Dict[str, float] = Field(default_factory=dict)
