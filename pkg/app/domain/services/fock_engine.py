"""Exact sparse Fock-space engine: tensor products, linear optics, loss and threshold detection."""
from __future__ import annotations

import itertools
import math
from collections import defaultdict
from logging import Logger
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from app.domain.models.analysis_models import ProjectionResult, TwoQubitDensityMatrix
from app.domain.models.errors import FockStateError, ZeroProbabilityError
from app.domain.models.fock_models import (
    DEFAULT_TRUNCATION,
    AnyFockState,
    ClickPattern,
    DetectorBinding,
    FockTruncation,
    LossChannel,
    MeasurementOutcome,
    MixedFockState,
    ModeId,
    ModeKind,
    OccupationVector,
    PathDelay,
    Polarization,
    PolarizingBeamSplitter,
    PureFockState,
    ThresholdMeasurement,
    Waveplate,
    as_mixed,
    path_modes,
)

_PBS_REFLECTION = 1j


class FockEngine:
    """Stateless evaluator for the optical and memory mode algebra."""

    def __init__(self, logger: Logger, truncation: FockTruncation = DEFAULT_TRUNCATION) -> None:
        self._logger = logger
        self._truncation = truncation

    @property
    def truncation(self) -> FockTruncation:
        return self._truncation

    def with_truncation(self, truncation: FockTruncation) -> "FockEngine":
        return FockEngine(self._logger, truncation)

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------
    def tensor(self, a: PureFockState, b: PureFockState, *, drop_excess: bool = False) -> PureFockState:
        """Kronecker product of states on disjoint mode sets.

        With drop_excess, terms beyond the truncation are discarded instead of rejected.
        """
        overlap = set(a.modes) & set(b.modes)
        if overlap:
            labels = ", ".join(sorted(mode.label() for mode in overlap))
            raise FockStateError(f"Cannot tensor states sharing modes: {labels}")
        amplitudes: Dict[OccupationVector, complex] = {}
        for left, left_amp in a.items():
            for right, right_amp in b.items():
                occupation = left + right
                if drop_excess and not self._truncation.admits(occupation):
                    continue
                self._check_truncation(occupation)
                amplitudes[occupation] = left_amp * right_amp
        return PureFockState(a.modes + b.modes, amplitudes)

    def relabel(self, state: AnyFockState, mapping: Mapping[ModeId, ModeId]) -> AnyFockState:
        """Rename modes; used for optical↔memory transfers."""
        if isinstance(state, MixedFockState):
            return MixedFockState([(weight, self.relabel(branch, mapping)) for weight, branch in state.branches])
        modes = tuple(mapping.get(mode, mode) for mode in state.modes)
        if len(set(modes)) != len(modes):
            raise FockStateError("Relabeling collides with an existing mode")
        return PureFockState(modes, state.amplitudes)

    def extend(self, state: PureFockState, modes: Sequence[ModeId]) -> PureFockState:
        """Append vacuum modes not already present."""
        missing = [mode for mode in modes if not state.has_mode(mode)]
        if not missing:
            return state
        return self.tensor(state, PureFockState.vacuum(missing))

    # ------------------------------------------------------------------
    # elements
    # ------------------------------------------------------------------
    def apply_element(self, state: AnyFockState, element, modes: Sequence[ModeId]) -> AnyFockState:
        """Apply one optical element to the listed modes."""
        modes = tuple(modes)
        for mode in modes:
            if mode.kind is not ModeKind.OPTICAL:
                raise FockStateError(f"Memory mode {mode.label()} cannot pass through optical elements")

        if isinstance(element, LossChannel):
            return self._apply_loss(as_mixed(state), element.transmission, modes)

        if isinstance(state, MixedFockState):
            return MixedFockState(
                [(weight, self.apply_element(branch, element, modes)) for weight, branch in state.branches]
            )

        if isinstance(element, Waveplate):
            if len(modes) != 2 or modes[0].path != modes[1].path or modes[0].polarization is not Polarization.H:
                raise FockStateError("A waveplate acts on the (H, V) modes of a single path")
            return self._linear_transform(state, modes, modes, element.jones())
        if isinstance(element, PathDelay):
            phase = np.exp(1j * element.phase)
            return self._linear_transform(state, modes, modes, np.eye(len(modes)) * phase)
        if isinstance(element, PolarizingBeamSplitter):
            in_modes, out_modes, matrix = self._pbs_map(element)
            if modes != in_modes:
                raise FockStateError(
                    f"PBS expects modes {[m.label() for m in in_modes]}, got {[m.label() for m in modes]}"
                )
            return self._linear_transform(state, in_modes, out_modes, matrix)
        raise FockStateError(f"Unsupported element {element!r}")

    def waveplate(self, state: AnyFockState, path: str, angle_deg: float, retardance: str = "half") -> AnyFockState:
        return self.apply_element(state, Waveplate(angle_deg=angle_deg, retardance=retardance), path_modes(path))

    def pbs(self, state: AnyFockState, in_paths: Sequence[str], out_paths: Tuple[str, str]) -> AnyFockState:
        element = PolarizingBeamSplitter(in_paths=tuple(in_paths), out_paths=out_paths)
        in_modes, _, _ = self._pbs_map(element)
        return self.apply_element(state, element, in_modes)

    def loss(self, state: AnyFockState, path: str, transmission: float) -> MixedFockState:
        return self.apply_element(state, LossChannel(transmission=transmission), path_modes(path))

    @staticmethod
    def _pbs_map(element: PolarizingBeamSplitter) -> Tuple[Tuple[ModeId, ...], Tuple[ModeId, ...], np.ndarray]:
        o1_h, o1_v = path_modes(element.out_paths[0])
        o2_h, o2_v = path_modes(element.out_paths[1])
        x_h, x_v = path_modes(element.in_paths[0])
        if len(element.in_paths) == 1:
            # columns: xH, xV; rows: o1H, o2V
            return (x_h, x_v), (o1_h, o2_v), np.array([[1, 0], [0, _PBS_REFLECTION]], dtype=complex)
        y_h, y_v = path_modes(element.in_paths[1])
        out_modes = (o1_h, o1_v, o2_h, o2_v)
        matrix = np.zeros((4, 4), dtype=complex)
        matrix[0, 0] = 1.0  # xH -> o1H
        matrix[3, 1] = _PBS_REFLECTION  # xV -> o2V
        matrix[2, 2] = 1.0  # yH -> o2H
        matrix[1, 3] = _PBS_REFLECTION  # yV -> o1V
        return (x_h, x_v, y_h, y_v), out_modes, matrix

    def _linear_transform(
        self,
        state: PureFockState,
        in_modes: Sequence[ModeId],
        out_modes: Sequence[ModeId],
        matrix: np.ndarray,
    ) -> PureFockState:
        """Substitute a†_in → Σ_out M[out, in] a†_out on every occupation vector."""
        state = self.extend(state, in_modes)
        in_positions = [state.index(mode) for mode in in_modes]
        kept = [mode for mode in state.modes if mode not in set(in_modes)]
        clash = set(kept) & set(out_modes)
        if clash:
            raise FockStateError(f"Output modes already occupied: {sorted(m.label() for m in clash)}")
        kept_positions = [state.index(mode) for mode in kept]
        new_modes = tuple(kept) + tuple(out_modes)
        n_out = len(out_modes)

        routes = [
            [(row, matrix[row, column]) for row in range(n_out) if matrix[row, column] != 0]
            for column in range(len(in_modes))
        ]
        expansion_cache: Dict[Tuple[int, ...], Dict[Tuple[int, ...], complex]] = {}
        result: Dict[OccupationVector, complex] = defaultdict(complex)

        for occupation, amplitude in state.items():
            local = tuple(occupation[position] for position in in_positions)
            expansion = expansion_cache.get(local)
            if expansion is None:
                expansion = self._expand(local, routes, n_out)
                expansion_cache[local] = expansion
            rest = tuple(occupation[position] for position in kept_positions)
            for out_occupation, coefficient in expansion.items():
                result[rest + out_occupation] += amplitude * coefficient

        output = PureFockState(new_modes, result)
        for occupation, _ in output.items():
            self._check_truncation(occupation)
        return output

    @staticmethod
    def _expand(local: Tuple[int, ...], routes, n_out: int) -> Dict[Tuple[int, ...], complex]:
        photons = [column for column, count in enumerate(local) for _ in range(count)]
        norm_in = math.prod(math.factorial(count) for count in local)
        accumulated: Dict[Tuple[int, ...], complex] = defaultdict(complex)
        for choice in itertools.product(*(routes[column] for column in photons)):
            counts = [0] * n_out
            coefficient = 1.0 + 0j
            for row, weight in choice:
                counts[row] += 1
                coefficient *= weight
            accumulated[tuple(counts)] += coefficient
        expansion: Dict[Tuple[int, ...], complex] = {}
        for counts, coefficient in accumulated.items():
            norm_out = math.prod(math.factorial(count) for count in counts)
            value = coefficient * math.sqrt(norm_out / norm_in)
            if abs(value) > 1e-15:
                expansion[counts] = value
        return expansion

    def _apply_loss(self, state: MixedFockState, transmission: float, modes: Sequence[ModeId]) -> MixedFockState:
        branches: List[Tuple[float, PureFockState]] = list(state.branches)
        for mode in modes:
            branches = [
                piece
                for weight, branch in branches
                for piece in self._loss_on_mode(weight, branch, mode, transmission)
            ]
        mixed, _ = MixedFockState.from_weighted(branches)
        return mixed

    @staticmethod
    def _loss_on_mode(weight: float, state: PureFockState, mode: ModeId, eta: float) -> List[Tuple[float, PureFockState]]:
        if not state.has_mode(mode):
            return [(weight, state)]
        position = state.index(mode)
        by_lost: Dict[int, Dict[OccupationVector, complex]] = defaultdict(dict)
        for occupation, amplitude in state.items():
            count = occupation[position]
            for lost in range(count + 1):
                kraus = math.sqrt(math.comb(count, lost) * eta ** (count - lost) * (1.0 - eta) ** lost)
                if kraus == 0.0:
                    continue
                reduced = occupation[:position] + (count - lost,) + occupation[position + 1 :]
                by_lost[lost][reduced] = by_lost[lost].get(reduced, 0.0) + amplitude * kraus
        return [(weight, PureFockState(state.modes, amplitudes)) for amplitudes in by_lost.values()]

    def _check_truncation(self, occupation: Sequence[int]) -> None:
        if not self._truncation.admits(occupation):
            raise FockStateError(
                f"Occupation {tuple(occupation)} exceeds truncation "
                f"(per mode {self._truncation.per_mode}, total {self._truncation.total})"
            )

    # ------------------------------------------------------------------
    # measurement
    # ------------------------------------------------------------------
    def measure_threshold(
        self,
        state: AnyFockState,
        detectors: Mapping[str, DetectorBinding],
        seed: Optional[int] = None,
        *,
        keep_states: bool = True,
    ) -> ThresholdMeasurement:
        """Exact click-pattern distribution; measured modes are consumed."""
        watched: Dict[ModeId, str] = {}
        for label, binding in detectors.items():
            for mode in binding.modes:
                if mode in watched:
                    raise FockStateError(f"Mode {mode.label()} watched by two detectors")
                watched[mode] = label
        labels = sorted(detectors)
        patterns = [
            frozenset(label for label, bit in zip(labels, bits) if bit)
            for bits in itertools.product((0, 1), repeat=len(labels))
        ]
        pattern_weights: Dict[frozenset, float] = defaultdict(float)
        pattern_branches: Dict[frozenset, List[Tuple[float, PureFockState]]] = defaultdict(list)

        for weight, branch in as_mixed(state).branches:
            branch = self.extend(branch, list(watched))
            detected_positions = [branch.index(mode) for mode in watched]
            detected_labels = [watched[mode] for mode in watched]
            rest_positions = [i for i, mode in enumerate(branch.modes) if mode not in watched]
            rest_modes = tuple(branch.modes[i] for i in rest_positions)

            groups: Dict[OccupationVector, Dict[OccupationVector, complex]] = defaultdict(dict)
            for occupation, amplitude in branch.items():
                detected = tuple(occupation[i] for i in detected_positions)
                rest = tuple(occupation[i] for i in rest_positions)
                groups[detected][rest] = amplitude

            for detected, amplitudes in groups.items():
                photons = defaultdict(int)
                for label, count in zip(detected_labels, detected):
                    photons[label] += count
                mass = sum(abs(value) ** 2 for value in amplitudes.values())
                conditional = PureFockState(rest_modes, amplitudes) if keep_states else None
                for pattern in patterns:
                    probability = weight * mass
                    for label in labels:
                        spec = detectors[label].spec
                        probability *= (
                            spec.click_probability(photons[label])
                            if label in pattern
                            else spec.no_click_probability(photons[label])
                        )
                    if probability <= 0.0:
                        continue
                    pattern_weights[pattern] += probability
                    if keep_states:
                        pattern_branches[pattern].append((probability / mass, conditional))

        outcomes: List[MeasurementOutcome] = []
        for pattern in patterns:
            probability = pattern_weights.get(pattern, 0.0)
            if probability <= 0.0:
                continue
            conditional_state = None
            if keep_states:
                conditional_state, _ = MixedFockState.from_weighted(pattern_branches[pattern])
            outcomes.append(MeasurementOutcome(pattern=ClickPattern(clicked=pattern), probability=probability, state=conditional_state))

        sampled = None
        if seed is not None and outcomes:
            rng = np.random.default_rng(seed)
            probabilities = np.array([outcome.probability for outcome in outcomes])
            sampled = outcomes[int(rng.choice(len(outcomes), p=probabilities / probabilities.sum()))].pattern
        return ThresholdMeasurement(outcomes=outcomes, sampled=sampled)

    def project_and_trace(
        self,
        state: AnyFockState,
        keep_paths: Tuple[str, str],
        kind: Optional[ModeKind] = None,
    ) -> ProjectionResult:
        """Post-select one excitation on each kept path and trace out everything else."""
        rho = np.zeros((4, 4), dtype=complex)
        total = 0.0
        for weight, branch in as_mixed(state).branches:
            total += weight * branch.norm() ** 2
            positions = []
            for path in keep_paths:
                modes = self._find_path(branch, path, kind)
                positions.append(tuple(branch.index(mode) if branch.has_mode(mode) else None for mode in modes))
            kept = {p for pair in positions for p in pair if p is not None}
            groups: Dict[OccupationVector, np.ndarray] = defaultdict(lambda: np.zeros(4, dtype=complex))
            for occupation, amplitude in branch.items():
                pol = []
                for h_pos, v_pos in positions:
                    n_h = occupation[h_pos] if h_pos is not None else 0
                    n_v = occupation[v_pos] if v_pos is not None else 0
                    if n_h + n_v != 1:
                        break
                    pol.append(0 if n_h else 1)
                else:
                    rest = tuple(count for i, count in enumerate(occupation) if i not in kept)
                    groups[rest][2 * pol[0] + pol[1]] += amplitude
            for vector in groups.values():
                rho += weight * np.outer(vector, vector.conj())
        mass = float(np.trace(rho).real)
        if mass <= 1e-300:
            raise ZeroProbabilityError(f"No probability mass with one excitation on each of {keep_paths}")
        return ProjectionResult(
            rho=TwoQubitDensityMatrix.from_array(rho),
            postselected_mass=mass,
            discarded_mass=max(total - mass, 0.0),
        )

    @staticmethod
    def _find_path(state: PureFockState, path: str, kind: Optional[ModeKind]) -> Tuple[ModeId, ModeId]:
        if kind is not None:
            return path_modes(path, kind)
        for candidate in (ModeKind.OPTICAL, ModeKind.MEMORY):
            modes = path_modes(path, candidate)
            if any(state.has_mode(mode) for mode in modes):
                return modes
        return path_modes(path)
