"""Request and response payloads of the experiment API."""
from __future__ import annotations

from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field


class ExperimentRequest(BaseModel):
    """Inline scenario (or the configured default) plus run overrides."""

    scenario: Optional[Dict[str, Any]] = None
    seed: Optional[int] = Field(default=None, ge=0)
    cycles: Optional[int] = Field(default=None, ge=1)
    jobs: Optional[int] = Field(default=None, ge=1, le=64)


class SourceRequest(ExperimentRequest):
    mode: Literal["sweep", "tomography"] = "sweep"
    pump_grid: Optional[List[float]] = None


class SwapRequest(ExperimentRequest):
    g2_grid: Optional[List[float]] = None


class SweepRequest(ExperimentRequest):
    axis: Literal["efficiency", "modes", "storage-time"] = "efficiency"


class TableResponse(BaseModel):
    header: List[str]
    rows: List[List[Any]]
    provenance: Dict[str, Any] = Field(default_factory=dict)
