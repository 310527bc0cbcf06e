"""Atomic-frequency-comb memory parameters and temporal-mode bookkeeping."""
from __future__ import annotations

import math
from typing import Dict, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.domain.models.errors import MemorySlotError
from app.domain.models.fock_models import ModeId, ModeKind, path_modes

# storage times of the efficiency-vs-time measurement, in units of the comb period
STORAGE_TIME_MULTIPLES = (1, 2, 3, 4, 5, 6, 8, 10, 12, 15, 18, 22)


class DecayModel(BaseModel):
    """Double exponential A·e^{−t/τ₁} + B·e^{−t/τ₂}."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    a: float = Field(default=1.04, ge=0.0)
    b: float = Field(default=0.29, ge=0.0)
    tau1_ns: float = Field(default=134.0, gt=0.0)
    tau2_ns: float = Field(default=1141.0, gt=0.0)

    def shape(self, t_ns: float) -> float:
        return self.a * math.exp(-t_ns / self.tau1_ns) + self.b * math.exp(-t_ns / self.tau2_ns)


class MemorySpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    comb_period_mhz: float = Field(default=18.0, gt=0.0)
    storage_time_ns: float = Field(default=55.6, gt=0.0)
    bandwidth_ghz: float = Field(default=1.0, gt=0.0)
    intrinsic_efficiency_at_ts: float = Field(default=0.143, ge=0.0, le=1.0)
    end_to_end_efficiency: float = Field(default=0.097, ge=0.0, le=1.0)
    decay: DecayModel = Field(default_factory=DecayModel)

    @model_validator(mode="after")
    def _consistent(self) -> "MemorySpec":
        if abs(self.storage_time_ns - 1e3 / self.comb_period_mhz) > 0.1:
            raise ValueError(
                f"Storage time {self.storage_time_ns} ns does not match comb period {self.comb_period_mhz} MHz"
            )
        if self.end_to_end_efficiency > self.intrinsic_efficiency_at_ts:
            raise ValueError("End-to-end efficiency cannot exceed the intrinsic efficiency")
        return self

    def storage_times(self) -> Tuple[float, ...]:
        return tuple(self.storage_time_ns * multiple for multiple in STORAGE_TIME_MULTIPLES)


NODE_A_MEMORY = MemorySpec()
NODE_B_MEMORY = MemorySpec(intrinsic_efficiency_at_ts=0.125, end_to_end_efficiency=0.064)


def slot_path(path: str, slot_index: int) -> str:
    return f"{path}/{slot_index}"


class MemorySlot(BaseModel):
    model_config = ConfigDict(frozen=True)

    slot_index: int = Field(ge=0)
    source_path: str
    absorbed_modes: Tuple[ModeId, ModeId]
    absorb_time_ns: float = 0.0


class MultimodeCapacity(BaseModel):
    model_config = ConfigDict(frozen=True)

    repetition_limited: int
    tbp_limited: int
    slot_spacing_ns: float


class TemporalModeRegister:
    """Temporal slots of one memory; mutated only by the single-threaded event loop."""

    def __init__(self, slot_spacing_ns: float = 12.5, storage_time_ns: float = 55.6, bandwidth_ghz: float = 1.0) -> None:
        if slot_spacing_ns <= 0:
            raise ValueError("slot spacing must be positive")
        self.slot_spacing_ns = slot_spacing_ns
        self.capacity_repetition_limited = math.floor(storage_time_ns / slot_spacing_ns + 1e-9)
        self.capacity_tbp_limited = math.floor(storage_time_ns * bandwidth_ghz + 1e-9)
        self._slots: Dict[int, MemorySlot] = {}

    @classmethod
    def for_memory(cls, spec: MemorySpec, repetition_rate_hz: float) -> "TemporalModeRegister":
        return cls(1e9 / repetition_rate_hz, spec.storage_time_ns, spec.bandwidth_ghz)

    @property
    def active_slots(self) -> Tuple[MemorySlot, ...]:
        return tuple(self._slots[index] for index in sorted(self._slots))

    def is_free(self, slot_index: int) -> bool:
        return slot_index not in self._slots

    def occupy(self, slot_index: int, source_path: str, absorb_time_ns: float = 0.0) -> MemorySlot:
        if not 0 <= slot_index < max(self.capacity_repetition_limited, 1):
            raise MemorySlotError(f"Slot {slot_index} outside register of {self.capacity_repetition_limited} modes")
        if not self.is_free(slot_index):
            raise MemorySlotError(f"Slot {slot_index} is already occupied")
        slot = MemorySlot(
            slot_index=slot_index,
            source_path=source_path,
            absorbed_modes=path_modes(slot_path(source_path, slot_index), ModeKind.MEMORY),
            absorb_time_ns=absorb_time_ns,
        )
        self._slots[slot_index] = slot
        return slot

    def get(self, slot_index: int) -> Optional[MemorySlot]:
        return self._slots.get(slot_index)

    def free(self, slot_index: int) -> MemorySlot:
        slot = self._slots.pop(slot_index, None)
        if slot is None:
            raise MemorySlotError(f"Slot {slot_index} is empty")
        return slot

    def clear(self) -> None:
        self._slots.clear()
