"""JSON-lines and flat-table writers for command results."""

from __future__ import annotations

import json
import logging
from collections.abc import Iterable
from pathlib import Path

import pandas as pd

logger = logging.getLogger("jtft.output")


def write_jsonl(path: str | Path, records: Iterable[dict]) -> Path:
    """One sorted-key JSON object per line; floats keep full repr precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(record, sort_keys=True) for record in records]
    path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
    logger.debug("Wrote %d records to %s", len(lines), path)
    return path


def read_jsonl(path: str | Path) -> list[dict]:
    text = Path(path).read_text(encoding="utf-8")
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def write_table(path: str | Path, rows: list[dict], columns: list[str] | None = None) -> Path:
    """CSV table for external plotting tools."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False)
    return path


def format_table(rows: list[dict], columns: list[str] | None = None) -> str:
    if not rows:
        return "(no rows)"
    frame = pd.DataFrame(rows, columns=columns)
    return frame.to_string(index=False, float_format=lambda v: f"{v:.6g}")
