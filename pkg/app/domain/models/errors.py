"""Domain errors raised across the simulator."""
from __future__ import annotations

from typing import Sequence


class LinkSimError(RuntimeError):
    """Base class for every recoverable simulator failure."""


class FockStateError(LinkSimError):
    """Raised for invalid mode bookkeeping or truncation overflow."""


class ZeroProbabilityError(LinkSimError):
    """Raised when a conditional state or ratio has no probability mass to renormalize."""


class MemorySlotError(LinkSimError):
    """Raised for occupied/empty slot misuse or invalid storage times."""


class TomographyError(LinkSimError):
    """Raised when count records cannot support a reconstruction."""


class ScenarioError(LinkSimError):
    """Raised when a scenario file fails validation."""

    def __init__(self, message: str, *, key_paths: Sequence[str] = ()) -> None:
        super().__init__(message)
        self.key_paths = list(key_paths)
