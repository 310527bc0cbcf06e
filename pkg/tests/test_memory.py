"""Tests for the AFC memory model and temporal-mode register."""
from __future__ import annotations

import math

import numpy as np
import pytest

from app.domain.models.errors import MemorySlotError
from app.domain.models.fock_models import ModeId, ModeKind, Polarization, PureFockState
from app.domain.models.memory_models import NODE_A_MEMORY, NODE_B_MEMORY, MemorySpec, TemporalModeRegister
from app.domain.services.analysis_service import AnalysisService
from app.domain.services.fock_engine import FockEngine
from app.domain.services.memory_service import MemoryService


def bell_pair() -> PureFockState:
    amplitude = 1 / math.sqrt(2)
    return PureFockState.from_terms(
        [
            (amplitude, {ModeId(path=path, polarization=Polarization.H): 1 for path in ("1", "2")}),
            (amplitude, {ModeId(path=path, polarization=Polarization.V): 1 for path in ("1", "2")}),
        ]
    )


def surviving_weight(state, path: str) -> float:
    total = 0.0
    for weight, branch in state.branches:
        positions = [i for i, mode in enumerate(branch.modes) if mode.path == path]
        if any(occupation[i] for occupation, _ in branch.items() for i in positions):
            total += weight
    return total


def test_efficiency_is_anchored_at_storage_time(memory: MemoryService) -> None:
    assert memory.efficiency_at(NODE_A_MEMORY, 55.6) == pytest.approx(0.143)
    assert memory.efficiency_at(NODE_B_MEMORY, 55.6) == pytest.approx(0.125)


def test_zero_time_efficiency_and_decay(memory: MemoryService) -> None:
    assert memory.efficiency_at(NODE_A_MEMORY, 0.0) == pytest.approx(0.1975, abs=5e-4)
    curve = memory.efficiency_curve(NODE_A_MEMORY)
    values = [eta for _, eta in curve]
    assert values == sorted(values, reverse=True)
    assert len(curve) == 12


def test_negative_storage_time_is_rejected(memory: MemoryService) -> None:
    with pytest.raises(MemorySlotError):
        memory.efficiency_at(NODE_A_MEMORY, -1.0)


def test_one_over_e_time(memory: MemoryService) -> None:
    assert memory.one_over_e_time(NODE_A_MEMORY) == pytest.approx(193.9, abs=1.0)


def test_fit_decay_recovers_double_exponential(memory: MemoryService) -> None:
    decay = NODE_A_MEMORY.decay
    times = np.array(list(NODE_A_MEMORY.storage_times()) + [1250.0, 2500.0])
    values = [decay.shape(t) for t in times]
    fitted = memory.fit_decay(times, values)
    assert fitted.tau1_ns == pytest.approx(decay.tau1_ns, rel=1e-3)
    assert fitted.tau2_ns == pytest.approx(decay.tau2_ns, rel=1e-3)
    assert fitted.a == pytest.approx(decay.a, rel=1e-3)
    assert fitted.b == pytest.approx(decay.b, rel=1e-3)


def test_multimode_capacity(memory: MemoryService) -> None:
    capacity = memory.multimode_capacity(NODE_A_MEMORY, 8.0e7)
    assert capacity.repetition_limited == 4
    assert capacity.tbp_limited == 55
    assert capacity.slot_spacing_ns == pytest.approx(12.5)


def test_figure_of_merit(memory: MemoryService) -> None:
    assert memory.figure_of_merit(NODE_A_MEMORY) == pytest.approx(0.143 * 55.6)


def test_absorb_then_retrieve_applies_survival(memory: MemoryService) -> None:
    register = TemporalModeRegister.for_memory(NODE_A_MEMORY, 8.0e7)
    stored = memory.absorb(bell_pair(), "1", register, slot_index=0)
    modes = stored.branches[0][1].modes
    assert any(mode.kind is ModeKind.MEMORY and mode.path == "1/0" for mode in modes)
    assert not any(mode.kind is ModeKind.OPTICAL and mode.path == "1" for mode in modes)
    assert not register.is_free(0)

    retrieved = memory.retrieve(stored, register, 0, 55.6, NODE_A_MEMORY)
    assert register.is_free(0)
    assert surviving_weight(retrieved, "1") == pytest.approx(0.143)


def test_retrieve_with_end_to_end_efficiency(memory: MemoryService) -> None:
    register = TemporalModeRegister.for_memory(NODE_A_MEMORY, 8.0e7)
    stored = memory.absorb(bell_pair(), "1", register, slot_index=1)
    retrieved = memory.retrieve(stored, register, 1, 55.6, NODE_A_MEMORY, include_end_to_end=True)
    assert surviving_weight(retrieved, "1") == pytest.approx(0.097)


def test_storage_preserves_polarization_state(
    engine: FockEngine, memory: MemoryService, analysis: AnalysisService
) -> None:
    register = TemporalModeRegister.for_memory(NODE_A_MEMORY, 8.0e7)
    before = engine.project_and_trace(bell_pair(), ("1", "2")).rho
    stored = memory.absorb(bell_pair(), "1", register)
    after = engine.project_and_trace(memory.retrieve(stored, register, 0, 55.6, NODE_A_MEMORY), ("1", "2")).rho
    assert analysis.state_fidelity(before, after) == pytest.approx(1.0, abs=1e-4)


def test_occupied_slot_rejects_second_absorption(memory: MemoryService) -> None:
    register = TemporalModeRegister.for_memory(NODE_A_MEMORY, 8.0e7)
    memory.absorb(bell_pair(), "1", register, slot_index=2)
    with pytest.raises(MemorySlotError):
        memory.absorb(bell_pair(), "1", register, slot_index=2)


def test_empty_and_out_of_range_slots(memory: MemoryService) -> None:
    register = TemporalModeRegister.for_memory(NODE_A_MEMORY, 8.0e7)
    with pytest.raises(MemorySlotError):
        memory.retrieve(bell_pair(), register, 0, 55.6, NODE_A_MEMORY)
    with pytest.raises(MemorySlotError):
        register.occupy(4, "1")


def test_memory_spec_validates_comb_and_efficiencies() -> None:
    with pytest.raises(ValueError):
        MemorySpec(storage_time_ns=60.0)
    with pytest.raises(ValueError):
        MemorySpec(end_to_end_efficiency=0.2)


@pytest.mark.parametrize("efficiency", [0.143, 0.0143, 0.00143])
def test_heralded_fidelity_does_not_depend_on_memory_loss(
    engine: FockEngine, memory: MemoryService, analysis: AnalysisService, efficiency: float
) -> None:
    spec = MemorySpec(intrinsic_efficiency_at_ts=efficiency, end_to_end_efficiency=efficiency / 2)
    register = TemporalModeRegister.for_memory(spec, 8.0e7)
    stored = memory.absorb(bell_pair(), "1", register)
    projection = engine.project_and_trace(memory.retrieve(stored, register, 0, 55.6, spec), ("1", "2"))
    assert analysis.fidelity_phi_plus(projection.rho) == pytest.approx(1.0, abs=1e-6)
    assert projection.postselected_mass == pytest.approx(efficiency)


def test_retrieval_transmission_divides_out_the_detector(memory: MemoryService) -> None:
    at_storage = memory.retrieval_transmission(NODE_B_MEMORY, NODE_B_MEMORY.storage_time_ns, 0.8)
    assert at_storage == pytest.approx(0.064 / 0.8)
    later = memory.retrieval_transmission(NODE_B_MEMORY, 2 * NODE_B_MEMORY.storage_time_ns, 0.8)
    assert later < at_storage
    assert memory.retrieval_transmission(NODE_B_MEMORY, NODE_B_MEMORY.storage_time_ns, 0.05) == 1.0
    assert memory.retrieval_transmission(NODE_B_MEMORY, NODE_B_MEMORY.storage_time_ns, 0.0) == 0.0
