"""Loading and validating scenario files."""
from __future__ import annotations

import json
from logging import Logger
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from pydantic import ValidationError

from app.domain.models.errors import ScenarioError
from app.domain.models.scenario_models import ScenarioConfig


class ScenarioService:
    def __init__(self, logger: Logger) -> None:
        self._logger = logger

    def load(self, path: Path) -> ScenarioConfig:
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ScenarioError(f"Scenario file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"Scenario file is not valid JSON: {exc}") from exc
        scenario = self.parse(payload)
        self._logger.info("Loaded scenario %s from %s", scenario.name, path)
        return scenario

    @staticmethod
    def parse(payload: Mapping[str, Any]) -> ScenarioConfig:
        """Validate a scenario mapping; errors keep the offending key paths."""
        try:
            return ScenarioConfig.model_validate(dict(payload))
        except ValidationError as exc:
            paths = [".".join(str(part) for part in error["loc"]) for error in exc.errors()]
            details = "; ".join(f"{path}: {error['msg']}" for path, error in zip(paths, exc.errors()))
            raise ScenarioError(f"Invalid scenario: {details}", key_paths=paths) from exc

    @staticmethod
    def dump(scenario: ScenarioConfig) -> Dict[str, Any]:
        return scenario.model_dump(mode="json")

    @staticmethod
    def with_run_overrides(
        scenario: ScenarioConfig,
        *,
        seed: Optional[int] = None,
        cycles: Optional[int] = None,
        jobs: Optional[int] = None,
    ) -> ScenarioConfig:
        """Apply command-line or request overrides to the run block."""
        updates = {key: value for key, value in (("seed", seed), ("cycles", cycles), ("jobs", jobs)) if value is not None}
        if not updates:
            return scenario
        try:
            run = scenario.run.model_validate({**scenario.run.model_dump(), **updates})
        except ValidationError as exc:
            paths = [".".join(["run", *(str(part) for part in error["loc"])]) for error in exc.errors()]
            raise ScenarioError(f"Invalid run override: {exc.errors()[0]['msg']}", key_paths=paths) from exc
        return scenario.model_copy(update={"run": run})
