"""Shared text formatting for CSV and report output."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence


class DataFormatError(ValueError):
    """Input file does not follow the expected layout."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def fmt(x: float) -> str:
    """9 significant digits, scientific notation."""
    return f"{float(x):.8e}"


def rounded(x: float) -> float:
    return float(fmt(x))


def write_csv(
    path: Path,
    header: Sequence[str],
    rows: Iterable[Sequence],
    metadata: dict | None = None,
) -> Path:
    lines = []
    for key, value in (metadata or {}).items():
        lines.append(f"# {key}={value}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else _cell(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def _cell(v) -> str:
    if isinstance(v, (bool, int)) and not isinstance(v, float):
        return str(int(v))
    return fmt(v)


def read_csv(path: Path, header: Sequence[str]) -> tuple[dict, list[list[float]]]:
    """Parse a numeric CSV with ``# key=value`` metadata lines.

    Returns (metadata, rows). Errors name the 1-based line number.
    """
    metadata: dict[str, str] = {}
    rows: list[list[float]] = []
    seen_header = False
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" not in body:
                raise DataFormatError(f"metadata line must be key=value: {raw!r}", lineno)
            key, _, value = body.partition("=")
            metadata[key.strip()] = value.strip()
            continue
        if not seen_header:
            cols = [c.strip() for c in line.split(",")]
            if cols != list(header):
                raise DataFormatError(
                    f"expected header {','.join(header)!r}, got {line!r}", lineno
                )
            seen_header = True
            continue
        cells = line.split(",")
        if len(cells) != len(header):
            raise DataFormatError(
                f"expected {len(header)} fields, got {len(cells)}", lineno
            )
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            raise DataFormatError(f"non-numeric field in {raw!r}", lineno) from None
    if not seen_header:
        raise DataFormatError("missing header line")
    if not rows:
        raise DataFormatError("no data rows after header")
    return metadata, rows


def write_json(path: Path, payload: dict) -> Path:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path
