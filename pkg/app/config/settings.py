"""Application settings and configuration helpers."""
from __future__ import annotations

import logging
from functools import lru_cache
from pathlib import Path
from typing import List, Optional

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

_BUNDLED_SCENARIO = Path(__file__).resolve().parent.parent / "scenarios" / "reference-defaults.json"


class Settings(BaseSettings):
    """Strongly typed settings loaded from the environment or .env files."""

    app_name: str = Field(default="LinkSim")
    scenario_path: Optional[Path] = Field(default=None, description="Falls back to the bundled reference-defaults scenario")

    max_jobs: int = Field(default=8, ge=1, le=64, description="Upper bound on Monte Carlo worker processes")
    chunk_cycles: int = Field(default=1_000, ge=10, description="Cycles per Monte Carlo seed partition")
    log_level: str = Field(default="INFO")
    cors_allowed_origins: List[str] = Field(default_factory=lambda: ["*"])

    channel_tolerance: float = Field(default=1e-10, gt=0)
    mle_max_iterations: int = Field(default=10_000, ge=10)

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="LINKSIM_",
        case_sensitive=False,
        extra="ignore",
    )

    @field_validator("log_level", mode="before")
    @classmethod
    def _normalise_log_level(cls, value):
        if value in (None, ""):
            return "INFO"
        level = str(value).strip().upper()
        if not isinstance(logging.getLevelName(level), int):
            raise ValueError(f"Unknown log level: {value}")
        return level

    def resolve_scenario_path(self, override: Optional[Path] = None) -> Path:
        """Return the scenario file to load, preferring an explicit override."""
        if override is not None:
            return override
        if self.scenario_path is not None:
            return self.scenario_path
        return _BUNDLED_SCENARIO

    def resolve_log_level(self) -> int:
        """Return the numeric logging level."""
        return int(logging.getLevelName(self.log_level))


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Return a cached settings instance."""
    return Settings()


def bundled_scenario_path() -> Path:
    """Location of the scenario file that encodes the reference constants."""
    return _BUNDLED_SCENARIO
