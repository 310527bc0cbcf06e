"""Sparse truncated Fock-space states, optical elements and detector descriptions."""
from __future__ import annotations

import math
from enum import Enum
from typing import Annotated, Dict, FrozenSet, Iterable, List, Literal, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.domain.models.errors import FockStateError, ZeroProbabilityError

OccupationVector = Tuple[int, ...]

_PRUNE = 1e-14


class Polarization(str, Enum):
    H = "H"
    V = "V"


class ModeKind(str, Enum):
    OPTICAL = "optical"
    MEMORY = "memory"


class ModeId(BaseModel):
    """One polarization mode of one optical path or memory slot."""

    model_config = ConfigDict(frozen=True)

    path: str
    polarization: Polarization
    kind: ModeKind = ModeKind.OPTICAL

    def sort_key(self) -> Tuple[str, str, str]:
        return (self.kind.value, self.path, self.polarization.value)

    def label(self) -> str:
        prefix = "M:" if self.kind is ModeKind.MEMORY else ""
        return f"{prefix}{self.path}.{self.polarization.value}"


def path_modes(path: str, kind: ModeKind = ModeKind.OPTICAL) -> Tuple[ModeId, ModeId]:
    """Return the (H, V) modes of a path."""
    return (
        ModeId(path=path, polarization=Polarization.H, kind=kind),
        ModeId(path=path, polarization=Polarization.V, kind=kind),
    )


class FockTruncation(BaseModel):
    """Per-mode and global photon-number ceilings."""

    model_config = ConfigDict(frozen=True)

    per_mode: int = Field(default=2, ge=1)
    total: int = Field(default=4, ge=1)

    def admits(self, occupation: Iterable[int]) -> bool:
        counts = list(occupation)
        return all(n <= self.per_mode for n in counts) and sum(counts) <= self.total


DEFAULT_TRUNCATION = FockTruncation()
# two sources with up to three pairs in total, photons free to bunch in one mode
MULTIPAIR_TRUNCATION = FockTruncation(per_mode=6, total=6)


class PureFockState:
    """Sparse map from occupation vectors over an ordered mode tuple to amplitudes.

    Instances are treated as immutable values; every engine operation returns a new state.
    """

    __slots__ = ("_modes", "_amplitudes", "_index")

    def __init__(self, modes: Sequence[ModeId], amplitudes: Mapping[OccupationVector, complex]) -> None:
        modes = tuple(modes)
        if len(set(modes)) != len(modes):
            raise FockStateError("Duplicate ModeId in state")
        self._modes = modes
        self._index = {mode: position for position, mode in enumerate(modes)}
        cleaned: Dict[OccupationVector, complex] = {}
        for occupation, amplitude in amplitudes.items():
            if len(occupation) != len(modes):
                raise FockStateError(f"Occupation {occupation} does not match {len(modes)} modes")
            if abs(amplitude) > _PRUNE:
                cleaned[tuple(occupation)] = complex(amplitude)
        self._amplitudes = cleaned

    @classmethod
    def vacuum(cls, modes: Sequence[ModeId] = ()) -> "PureFockState":
        modes = tuple(modes)
        return cls(modes, {tuple(0 for _ in modes): 1.0})

    @classmethod
    def from_terms(cls, terms: Iterable[Tuple[complex, Mapping[ModeId, int]]], modes: Optional[Sequence[ModeId]] = None) -> "PureFockState":
        """Build a state from (amplitude, {mode: count}) pairs."""
        terms = list(terms)
        if modes is None:
            seen = {mode for _, occupation in terms for mode in occupation}
            modes = sorted(seen, key=ModeId.sort_key)
        modes = tuple(modes)
        position = {mode: index for index, mode in enumerate(modes)}
        amplitudes: Dict[OccupationVector, complex] = {}
        for amplitude, occupation in terms:
            vector = [0] * len(modes)
            for mode, count in occupation.items():
                vector[position[mode]] = count
            key = tuple(vector)
            amplitudes[key] = amplitudes.get(key, 0.0) + amplitude
        return cls(modes, amplitudes)

    @property
    def modes(self) -> Tuple[ModeId, ...]:
        return self._modes

    @property
    def amplitudes(self) -> Dict[OccupationVector, complex]:
        return dict(self._amplitudes)

    def items(self) -> Iterable[Tuple[OccupationVector, complex]]:
        return self._amplitudes.items()

    def __len__(self) -> int:
        return len(self._amplitudes)

    def index(self, mode: ModeId) -> int:
        try:
            return self._index[mode]
        except KeyError as exc:
            raise FockStateError(f"Mode {mode.label()} not present in state") from exc

    def has_mode(self, mode: ModeId) -> bool:
        return mode in self._index

    def norm(self) -> float:
        return math.sqrt(sum(abs(amplitude) ** 2 for amplitude in self._amplitudes.values()))

    def normalized(self) -> "PureFockState":
        norm = self.norm()
        if norm == 0.0:
            raise ZeroProbabilityError("Cannot normalize a zero state")
        return PureFockState(self._modes, {key: value / norm for key, value in self._amplitudes.items()})

    def scaled(self, factor: complex) -> "PureFockState":
        return PureFockState(self._modes, {key: value * factor for key, value in self._amplitudes.items()})

    def photon_numbers(self) -> List[int]:
        return sorted({sum(key) for key in self._amplitudes})

    def canonical(self) -> Dict[Tuple[Tuple[ModeId, int], ...], complex]:
        """Mode-order independent view with empty modes dropped."""
        view: Dict[Tuple[Tuple[ModeId, int], ...], complex] = {}
        for occupation, amplitude in self._amplitudes.items():
            key = tuple(
                sorted(
                    ((mode, count) for mode, count in zip(self._modes, occupation) if count),
                    key=lambda pair: pair[0].sort_key(),
                )
            )
            view[key] = view.get(key, 0.0) + amplitude
        return view

    def amplitude_of(self, occupation: Mapping[ModeId, int]) -> complex:
        key = tuple(sorted(((mode, count) for mode, count in occupation.items() if count), key=lambda pair: pair[0].sort_key()))
        return self.canonical().get(key, 0.0)

    def distance(self, other: "PureFockState") -> float:
        """Euclidean distance between two states regardless of mode ordering."""
        left, right = self.canonical(), other.canonical()
        keys = set(left) | set(right)
        return math.sqrt(sum(abs(left.get(key, 0.0) - right.get(key, 0.0)) ** 2 for key in keys))


class MixedFockState:
    """Finite ensemble of (probability, normalized pure state)."""

    __slots__ = ("_branches",)

    def __init__(self, branches: Iterable[Tuple[float, PureFockState]], *, tolerance: float = 1e-10) -> None:
        kept = [(float(weight), state) for weight, state in branches if weight > 0.0]
        total = sum(weight for weight, _ in kept)
        if abs(total - 1.0) > tolerance:
            raise FockStateError(f"Ensemble probabilities sum to {total}, expected 1")
        self._branches = tuple(kept)

    @classmethod
    def pure(cls, state: PureFockState) -> "MixedFockState":
        return cls([(1.0, state)])

    @classmethod
    def from_weighted(cls, branches: Iterable[Tuple[float, PureFockState]]) -> Tuple["MixedFockState", float]:
        """Renormalize unnormalized (weight, state) pairs; returns the ensemble and the total weight."""
        normalized: List[Tuple[float, PureFockState]] = []
        for weight, state in branches:
            norm = state.norm()
            mass = weight * norm * norm
            if mass > 0.0:
                normalized.append((mass, state.scaled(1.0 / norm)))
        total = sum(mass for mass, _ in normalized)
        if total <= 0.0:
            raise ZeroProbabilityError("Ensemble has no probability mass")
        return cls([(mass / total, state) for mass, state in normalized]), total

    @property
    def branches(self) -> Tuple[Tuple[float, PureFockState], ...]:
        return self._branches

    def __len__(self) -> int:
        return len(self._branches)

    def total_probability(self) -> float:
        return sum(weight for weight, _ in self._branches)


AnyFockState = Union[PureFockState, MixedFockState]


def as_mixed(state: AnyFockState) -> MixedFockState:
    return state if isinstance(state, MixedFockState) else MixedFockState.pure(state)


# ---------------------------------------------------------------------------
# Optical elements
# ---------------------------------------------------------------------------


class Waveplate(BaseModel):
    """Half- or quarter-wave plate; Jones matrix R(-θ)·diag(1, e^{iδ})·R(θ)."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["waveplate"] = "waveplate"
    angle_deg: float
    retardance: Literal["half", "quarter"] = "half"
    global_phase: float = Field(default=0.0, description="Extra overall phase, radians")

    def jones(self) -> np.ndarray:
        theta = math.radians(self.angle_deg)
        cos, sin = math.cos(theta), math.sin(theta)
        rotation = np.array([[cos, sin], [-sin, cos]], dtype=complex)
        retarder = np.diag([1.0, -1.0 if self.retardance == "half" else 1j]).astype(complex)
        return np.exp(1j * self.global_phase) * (rotation.T @ retarder @ rotation)


class PolarizingBeamSplitter(BaseModel):
    """H transmits, V reflects with phase i.

    With inputs (x, y) and outputs (o1, o2): xH→o1, xV→o2, yH→o2, yV→o1.
    A single input path behaves as (x, vacuum).
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal["pbs"] = "pbs"
    in_paths: Tuple[str, ...]
    out_paths: Tuple[str, str]

    @field_validator("in_paths")
    @classmethod
    def _check_inputs(cls, value: Tuple[str, ...]) -> Tuple[str, ...]:
        if len(value) not in (1, 2):
            raise ValueError("A PBS takes one or two input paths")
        return value


class PathDelay(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["delay"] = "delay"
    phase: float = 0.0


class LossChannel(BaseModel):
    """Beamsplitter to an unobserved environment mode."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["loss"] = "loss"
    transmission: float = Field(ge=0.0, le=1.0)


OpticalElement = Annotated[
    Union[Waveplate, PolarizingBeamSplitter, PathDelay, LossChannel],
    Field(discriminator="kind"),
]


# ---------------------------------------------------------------------------
# Detection
# ---------------------------------------------------------------------------


def dark_count_probability(rate_hz: float, window_ns: float) -> float:
    """Poisson probability of at least one dark count in the window."""
    return float(1.0 - np.exp(-rate_hz * window_ns * 1e-9))


class ThresholdDetectorSpec(BaseModel):
    """Click/no-click detector with finite efficiency and dark counts."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    efficiency: float = Field(default=0.85, ge=0.0, le=1.0)
    dark_count_prob_per_window: float = Field(default=0.0, ge=0.0, le=1.0)
    window_ns: float = Field(default=3.0, gt=0.0)

    @classmethod
    def from_dark_rate(cls, *, efficiency: float, dark_rate_hz: float, window_ns: float) -> "ThresholdDetectorSpec":
        return cls(
            efficiency=efficiency,
            dark_count_prob_per_window=dark_count_probability(dark_rate_hz, window_ns),
            window_ns=window_ns,
        )

    def scaled(self, transmission: float) -> "ThresholdDetectorSpec":
        """Same detector behind an extra loss; loss before a threshold detector only rescales efficiency."""
        return self.model_copy(update={"efficiency": self.efficiency * transmission})

    def no_click_probability(self, photons: int) -> float:
        return (1.0 - self.efficiency) ** photons * (1.0 - self.dark_count_prob_per_window)

    def click_probability(self, photons: int) -> float:
        return 1.0 - self.no_click_probability(photons)


IDEAL_DETECTOR = ThresholdDetectorSpec(efficiency=1.0, dark_count_prob_per_window=0.0)


class DetectorBinding(BaseModel):
    """A labelled detector watching one or more modes."""

    model_config = ConfigDict(frozen=True)

    modes: Tuple[ModeId, ...]
    spec: ThresholdDetectorSpec = IDEAL_DETECTOR

    @model_validator(mode="after")
    def _check_modes(self) -> "DetectorBinding":
        if not self.modes:
            raise ValueError("A detector needs at least one mode")
        if any(mode.kind is not ModeKind.OPTICAL for mode in self.modes):
            raise ValueError("Detectors watch optical modes only")
        return self


class ClickPattern(BaseModel):
    """Set of detector labels that clicked."""

    model_config = ConfigDict(frozen=True)

    clicked: FrozenSet[str] = frozenset()

    @classmethod
    def of(cls, *labels: str) -> "ClickPattern":
        return cls(clicked=frozenset(labels))

    def label(self) -> str:
        return "+".join(sorted(self.clicked)) or "none"


class MeasurementOutcome(BaseModel):
    """One click pattern, its probability and the state left on unmeasured modes."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    pattern: ClickPattern
    probability: float
    state: Optional[MixedFockState] = None


class ThresholdMeasurement(BaseModel):
    """Distribution over click patterns, optionally with one sampled outcome."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    outcomes: List[MeasurementOutcome] = Field(default_factory=list)
    sampled: Optional[ClickPattern] = None

    def probability(self, pattern: ClickPattern) -> float:
        return sum(outcome.probability for outcome in self.outcomes if outcome.pattern == pattern)

    def outcome(self, pattern: ClickPattern) -> Optional[MeasurementOutcome]:
        for candidate in self.outcomes:
            if candidate.pattern == pattern:
                return candidate
        return None

    def total_probability(self) -> float:
        return sum(outcome.probability for outcome in self.outcomes)
