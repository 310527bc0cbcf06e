"""Elementary-link timing, duty cycle, rate budget, event log and Monte Carlo reports."""
from __future__ import annotations

import math
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.domain.models.memory_models import MemorySpec, NODE_A_MEMORY
from app.domain.models.source_models import SpdcSourceSpec


class NodeSpec(BaseModel):
    """One quantum node: a photon-pair source feeding a memory and the BSM."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "A"
    source: SpdcSourceSpec = Field(default_factory=SpdcSourceSpec)
    memory: MemorySpec = Field(default_factory=lambda: NODE_A_MEMORY)
    target_g2: Optional[float] = Field(default=50.0, gt=1.0)
    target_fidelity: Optional[float] = Field(default=None, ge=0.25, le=1.0)
    transmission_to_bsm: float = Field(default=1.0, ge=0.0, le=1.0)


class LinkTimingSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    fiber_to_bsm_m: float = Field(default=5.0, ge=0.0)
    fiber_to_memory_m: float = Field(default=3.0, ge=0.0)
    fiber_index_speed_m_s: float = Field(default=2.0e8, gt=0.0)
    detector_fiber_m: float = Field(default=1.0, ge=0.0)
    detector_latency_ns: float = Field(default=15.0, ge=0.0)
    logic_latency_ns: float = Field(default=8.0, ge=0.0)
    freespace_heralding_m: float = Field(default=1.8, ge=0.0)
    freespace_speed_m_s: float = Field(default=3.0e8, gt=0.0)
    storage_time_ns: float = Field(default=55.6, ge=0.0)

    def communication_delay_ns(self) -> float:
        fiber = (self.fiber_to_bsm_m - self.fiber_to_memory_m + self.detector_fiber_m) / self.fiber_index_speed_m_s
        freespace = self.freespace_heralding_m / self.freespace_speed_m_s
        return (fiber + freespace) * 1e9 + self.detector_latency_ns + self.logic_latency_ns


class DutyCycleSpec(BaseModel):
    """AFC preparation, two guard waits and the storage window, repeated at a fixed rate."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    afc_prep_ms: float = Field(default=3.8, ge=0.0)
    guard_wait_ms: float = Field(default=0.6, ge=0.0)
    storage_window_ms: float = Field(default=5.0, gt=0.0)
    cycle_rate_hz: float = Field(default=100.0, gt=0.0)

    @model_validator(mode="after")
    def _fits_period(self) -> "DutyCycleSpec":
        total_ms = self.afc_prep_ms + 2 * self.guard_wait_ms + self.storage_window_ms
        period_ms = 1e3 / self.cycle_rate_hz
        if abs(total_ms - period_ms) > 0.05 * period_ms:
            raise ValueError(f"Cycle phases sum to {total_ms:.2f} ms, period is {period_ms:.2f} ms")
        return self

    @property
    def duty_fraction(self) -> float:
        return self.storage_window_ms * 1e-3 * self.cycle_rate_hz


class RateBudget(BaseModel):
    """Measured rates and efficiencies behind the closed-form EDR arithmetic."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    fourfold_before_storage_per_h: float = Field(default=410.0, ge=0.0)
    end_to_end_a: float = Field(default=0.097, ge=0.0, le=1.0)
    end_to_end_b: float = Field(default=0.064, ge=0.0, le=1.0)
    duty: float = Field(default=0.5, ge=0.0, le=1.0)
    herald_rate_hz: float = Field(default=100.0, gt=0.0)
    noise_rate_per_channel_hz: float = Field(default=200.0, ge=0.0)
    retrieved_window_ns: float = Field(default=3.0, gt=0.0)
    bsm_window_ns: float = Field(default=2.0, gt=0.0)
    measured_edr_per_h: float = Field(default=1.1, ge=0.0)
    measured_modes: int = Field(default=4, ge=1)
    recall_efficiency: float = Field(default=0.16, gt=0.0, le=1.0)
    retrieval_transmission: float = Field(default=0.75, gt=0.0, le=1.0)
    detection_efficiency: float = Field(default=0.85, gt=0.0, le=1.0)
    fidelity_signal: float = Field(default=0.804, ge=0.0, le=1.0)
    measured_pair_collection: float = Field(default=0.0064, gt=0.0, le=1.0)


class LinkPhysics(BaseModel):
    """Per-attempt probabilities of one link, taken from the source, BSM, memory and detector models."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    herald_probability: float = Field(ge=0.0, le=1.0)
    # stored photon collected, recalled at the storage time and detected by its analyzer
    retrieval_probabilities: Tuple[float, float]
    dark_probabilities: Tuple[float, float] = (0.0, 0.0)
    storage_time_ns: float = Field(ge=0.0)
    slot_spacing_ns: float = Field(gt=0.0)
    modes: int = Field(ge=1)

    @model_validator(mode="after")
    def _probabilities(self) -> "LinkPhysics":
        for value in self.retrieval_probabilities + self.dark_probabilities:
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"Probability {value} outside [0, 1]")
        return self

    def click_probability(self, index: int) -> float:
        retrieval, dark = self.retrieval_probabilities[index], self.dark_probabilities[index]
        return 1.0 - (1.0 - retrieval) * (1.0 - dark)

    @property
    def signal_probability(self) -> float:
        """Both retrieved photons detected, per herald."""
        return self.retrieval_probabilities[0] * self.retrieval_probabilities[1]

    @property
    def accidental_probability(self) -> float:
        """Coincidences with at least one analyzer click from a dark count, per herald."""
        return max(self.click_probability(0) * self.click_probability(1) - self.signal_probability, 0.0)

    @property
    def fourfold_probability(self) -> float:
        """Herald followed by an analyzer coincidence, per attempt."""
        return self.herald_probability * (self.signal_probability + self.accidental_probability)


class EventKind(str, Enum):
    PULSE = "pulse"
    EMISSION = "emission"
    ABSORPTION = "absorption"
    HERALD = "herald"
    RETRIEVAL = "retrieval"
    DETECTION = "detection"


class LinkEvent(BaseModel):
    model_config = ConfigDict(frozen=True)

    time_ns: float
    kind: EventKind
    payload: Dict[str, Any] = Field(default_factory=dict)


class EventLog:
    """Time-ordered record of simulated link events."""

    def __init__(self, events: Sequence[LinkEvent] = ()) -> None:
        self._events: List[LinkEvent] = sorted(events, key=lambda event: event.time_ns)

    def record(self, time_ns: float, kind: EventKind, **payload: Any) -> None:
        event = LinkEvent(time_ns=time_ns, kind=kind, payload=payload)
        if self._events and time_ns < self._events[-1].time_ns:
            # late arrivals are placed by time, keeping insertion order among ties
            index = len(self._events)
            while index > 0 and self._events[index - 1].time_ns > time_ns:
                index -= 1
            self._events.insert(index, event)
            return
        self._events.append(event)

    def merge(self, other: "EventLog") -> "EventLog":
        return EventLog(self._events + list(other.events))

    @property
    def events(self) -> Tuple[LinkEvent, ...]:
        return tuple(self._events)

    def __len__(self) -> int:
        return len(self._events)

    def is_ordered(self) -> bool:
        return all(a.time_ns <= b.time_ns for a, b in zip(self._events, self._events[1:]))

    def count(self, kind: EventKind) -> int:
        return sum(1 for event in self._events if event.kind is kind)

    def rows(self) -> List[List[Any]]:
        return [
            [event.time_ns, event.kind.value, ";".join(f"{key}={value}" for key, value in sorted(event.payload.items()))]
            for event in self._events
        ]


class Estimate(BaseModel):
    """Point estimate with its standard error and a 95% interval."""

    value: float
    std_error: float = Field(ge=0.0)
    ci_low: float
    ci_high: float

    @classmethod
    def from_value(cls, value: float, std_error: float) -> "Estimate":
        std_error = float(std_error) if math.isfinite(std_error) else 0.0
        return cls(value=float(value), std_error=std_error, ci_low=value - 1.96 * std_error, ci_high=value + 1.96 * std_error)


class EdrProjection(BaseModel):
    label: str
    rate_per_h: float
    factor: float


class RateBudgetReport(BaseModel):
    heralding_margin_ns: float
    edr_per_h: float
    stored_edr_per_h: float
    multiplexed_edr_per_h: Dict[int, float]
    accidental_per_h: float
    accidental_probability_per_herald: float
    heralding_probability: float
    four_photon_probability: float
    pair_collection_efficiency: float
    memory_figure_of_merit: Dict[str, float]
    projections: List[EdrProjection]
    single_photon_scheme: Dict[str, float]


class FidelityCurvePoint(BaseModel):
    efficiency: float
    fidelity: float
    signal: float
    noise: float


class MonteCarloReport(BaseModel):
    seed: int
    cycles: int
    modes: int
    attempts: int
    duty_fraction: float
    failed_cycles: int
    heralds: int
    fourfold_events: float
    herald_rate_hz: Estimate
    fourfold_rate_per_h: Estimate
    fidelity: Estimate
    witness: Estimate
    g2: Estimate
    heralding_margin_ns: float
    correlations: Dict[str, float] = Field(default_factory=dict)
