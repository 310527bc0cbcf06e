"""Utility helpers for run directories and provenance-stamped outputs."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence


def ensure_directory(path: Path) -> Path:
    """Ensure the directory exists and return it."""
    path.mkdir(parents=True, exist_ok=True)
    return path


def config_hash(payload: Mapping[str, Any]) -> str:
    """Stable short hash of a JSON-compatible configuration mapping."""
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def render_csv(
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    *,
    provenance: Optional[Mapping[str, Any]] = None,
) -> str:
    """Render rows as CSV text, prefixed by `# key=value` provenance comments."""
    buffer = io.StringIO()
    for key, value in (provenance or {}).items():
        buffer.write(f"# {key}={value}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format_cell(cell) for cell in row])
    return buffer.getvalue()


def render_json(payload: Any) -> str:
    """Render a payload as deterministic, indented JSON."""
    return json.dumps(payload, sort_keys=True, indent=2, default=str) + "\n"


def write_text(destination: Path, content: str) -> Path:
    """Persist text output, creating parent directories on demand."""
    ensure_directory(destination.parent)
    destination.write_text(content, encoding="utf-8")
    return destination


def read_csv_rows(file_path: Path) -> list[dict[str, str]]:
    """Read a CSV file, skipping `#` comment lines."""
    lines = [line for line in file_path.read_text(encoding="utf-8").splitlines() if not line.startswith("#")]
    return list(csv.DictReader(lines))


def _format_cell(cell: Any) -> Any:
    if isinstance(cell, float):
        return repr(cell)
    return cell
