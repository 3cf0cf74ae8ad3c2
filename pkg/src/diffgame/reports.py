"""Deterministic report emission: JSON-like trees, CSV tables, plot data.

All floats are formatted at 12 significant digits; keys are emitted in sorted
order, so identical records always produce identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def fmt_float(x) -> str:
    return format(float(x), ".12g")


def _normalize(obj):
    """Round-trip floats through the 12-significant-digit formatting so the
    JSON encoder emits stable text."""
    if isinstance(obj, dict):
        return {str(k): _normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_normalize(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(fmt_float(obj))
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _normalize(obj.tolist())
    return obj


def emit_tree(record: dict, path) -> None:
    """Structured summary record with stable key order and float format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_normalize(record), sort_keys=True, indent=2)
    path.write_text(text + "\n")


def emit_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """CSV with ',' separator, '.' decimal, a header row, 12-digit floats."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for cell in row:
            if isinstance(cell, (float, np.floating)):
                cells.append(fmt_float(cell))
            elif cell is None:
                cells.append("")
            else:
                cells.append(str(cell))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


def emit_plotdata(path, columns: dict[str, Sequence]) -> None:
    """Two-or-three-column CSV of aligned series for plotting."""
    names = list(columns)
    series = [np.asarray(columns[n]) for n in names]
    rows = zip(*[s.tolist() for s in series])
    emit_csv(path, names, rows)
