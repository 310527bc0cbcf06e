"""AFC memory: time-dependent efficiency, absorption and retrieval on Fock states."""
from __future__ import annotations

from logging import Logger
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from app.domain.models.errors import MemorySlotError
from app.domain.models.fock_models import (
    AnyFockState,
    LossChannel,
    MixedFockState,
    as_mixed,
    path_modes,
)
from app.domain.models.memory_models import (
    DecayModel,
    MemorySlot,
    MemorySpec,
    MultimodeCapacity,
    TemporalModeRegister,
)
from app.domain.services.fock_engine import FockEngine


class MemoryService:
    def __init__(self, engine: FockEngine, logger: Logger) -> None:
        self._engine = engine
        self._logger = logger

    # ------------------------------------------------------------------
    # efficiency
    # ------------------------------------------------------------------
    @staticmethod
    def efficiency_at(spec: MemorySpec, t_ns: float) -> float:
        """η(t) anchored at the measured efficiency for the comb storage time."""
        if t_ns < 0:
            raise MemorySlotError(f"Storage time must be non-negative, got {t_ns}")
        decay = spec.decay
        value = spec.intrinsic_efficiency_at_ts * decay.shape(t_ns) / decay.shape(spec.storage_time_ns)
        return min(value, 1.0)

    def one_over_e_time(self, spec: MemorySpec) -> float:
        """Storage time at which η(t)/η(0) = 1/e."""
        start = self.efficiency_at(spec, 0.0)
        target = start / np.e
        upper = 10 * max(spec.decay.tau1_ns, spec.decay.tau2_ns)
        return float(optimize.brentq(lambda t: self.efficiency_at(spec, t) - target, 0.0, upper, xtol=1e-9))

    def efficiency_curve(self, spec: MemorySpec, times_ns: Optional[Iterable[float]] = None) -> List[Tuple[float, float]]:
        times = list(times_ns) if times_ns is not None else list(spec.storage_times())
        return [(float(t), self.efficiency_at(spec, t)) for t in times]

    def fit_decay(
        self,
        times_ns: Sequence[float],
        values: Sequence[float],
        initial: Tuple[float, float, float, float] = (1.0, 0.3, 100.0, 1000.0),
    ) -> DecayModel:
        """Least-squares double-exponential fit of decay-shape samples."""

        def model(t, a, b, tau1, tau2):
            return a * np.exp(-t / tau1) + b * np.exp(-t / tau2)

        params, _ = optimize.curve_fit(
            model,
            np.asarray(times_ns, dtype=float),
            np.asarray(values, dtype=float),
            p0=initial,
            bounds=([0.0, 0.0, 1.0, 1.0], [np.inf, np.inf, 1e5, 1e6]),
            maxfev=20_000,
        )
        a, b, tau1, tau2 = (float(value) for value in params)
        if tau1 > tau2:
            a, b, tau1, tau2 = b, a, tau2, tau1
        self._logger.debug("Decay fit A=%.4f B=%.4f tau1=%.1f tau2=%.1f", a, b, tau1, tau2)
        return DecayModel(a=a, b=b, tau1_ns=tau1, tau2_ns=tau2)

    @staticmethod
    def multimode_capacity(spec: MemorySpec, repetition_rate_hz: float) -> MultimodeCapacity:
        register = TemporalModeRegister.for_memory(spec, repetition_rate_hz)
        return MultimodeCapacity(
            repetition_limited=register.capacity_repetition_limited,
            tbp_limited=register.capacity_tbp_limited,
            slot_spacing_ns=register.slot_spacing_ns,
        )

    @staticmethod
    def figure_of_merit(spec: MemorySpec) -> float:
        """Efficiency × storage time × bandwidth."""
        return spec.intrinsic_efficiency_at_ts * spec.storage_time_ns * spec.bandwidth_ghz

    # ------------------------------------------------------------------
    # state transfer
    # ------------------------------------------------------------------
    def absorb(
        self,
        state: AnyFockState,
        path: str,
        register: TemporalModeRegister,
        slot_index: int = 0,
        *,
        time_ns: float = 0.0,
        absorption_probability: float = 1.0,
    ) -> MixedFockState:
        """Map the photonic polarization modes of a path onto a free memory slot.

        Absorption is deterministic by default; all memory loss is charged at retrieval.
        """
        if not register.is_free(slot_index):
            raise MemorySlotError(f"Slot {slot_index} is already occupied")
        mixed = as_mixed(state)
        if absorption_probability < 1.0:
            mixed = self._engine.apply_element(mixed, LossChannel(transmission=absorption_probability), path_modes(path))
        slot = register.occupy(slot_index, path, time_ns)
        return self._engine.relabel(mixed, dict(zip(path_modes(path), slot.absorbed_modes)))

    def release(self, state: AnyFockState, slot: MemorySlot, out_path: Optional[str] = None) -> AnyFockState:
        """Relabel a slot's memory modes back to optical modes without loss."""
        return self._engine.relabel(state, dict(zip(slot.absorbed_modes, path_modes(out_path or slot.source_path))))

    def retrieve(
        self,
        state: AnyFockState,
        register: TemporalModeRegister,
        slot_index: int,
        t_ns: float,
        spec: MemorySpec,
        *,
        include_end_to_end: bool = False,
        out_path: Optional[str] = None,
    ) -> MixedFockState:
        """Re-emit the stored excitation with survival η(t), or the end-to-end efficiency when flagged."""
        slot = register.get(slot_index)
        if slot is None:
            raise MemorySlotError(f"Slot {slot_index} is empty")
        survival = self.survival(spec, t_ns, include_end_to_end=include_end_to_end)
        released = self.release(state, slot, out_path)
        register.free(slot_index)
        path = out_path or slot.source_path
        return self._engine.apply_element(released, LossChannel(transmission=survival), path_modes(path))

    def survival(self, spec: MemorySpec, t_ns: float, *, include_end_to_end: bool = False) -> float:
        eta = self.efficiency_at(spec, t_ns)
        if include_end_to_end and spec.intrinsic_efficiency_at_ts > 0:
            eta *= spec.end_to_end_efficiency / spec.intrinsic_efficiency_at_ts
        return eta

    def retrieval_transmission(self, spec: MemorySpec, t_ns: float, detector_efficiency: float) -> float:
        """Transmission ahead of the analyzer detector; the end-to-end efficiency already contains it."""
        if detector_efficiency <= 0:
            return 0.0
        return min(self.survival(spec, t_ns, include_end_to_end=True) / detector_efficiency, 1.0)
