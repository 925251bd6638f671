"""CSV and JSON sidecar writers with a byte-stable format."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np


def fmt(v: Any, digits: int = 17) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.{digits}g}"


def _format_column(col: np.ndarray, digits: int) -> list[str]:
    col = np.asarray(col)
    if col.dtype == bool:
        return np.where(col, "1", "0").tolist()
    if np.issubdtype(col.dtype, np.integer):
        return [str(int(v)) for v in col.tolist()]
    if col.dtype.kind in "US O":
        return [str(v) for v in col.tolist()]
    return [fmt(v, digits) for v in col.tolist()]


def write_csv(
    path: str | Path,
    header: Sequence[str],
    columns: Sequence[Sequence[Any]],
    digits: int = 17,
    append: bool = False,
) -> int:
    """Write columns as CSV with ``'\\n'`` line endings; returns rows written."""
    path = Path(path)
    cols = [_format_column(np.asarray(c), digits) for c in columns]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("columns differ in length")
    mode = "a" if append else "w"
    with path.open(mode, encoding="utf-8", newline="\n") as fh:
        if not append:
            fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(row) + "\n")
    return n


def write_rows(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]], digits: int = 17) -> int:
    n = 0
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v, digits) for v in row) + "\n")
            n += 1
    return n


def write_matrix(path: str | Path, matrix: np.ndarray, digits: int = 17) -> None:
    """Plain numeric matrix, one grid row per line, no header."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for row in np.asarray(matrix):
            fh.write(",".join(fmt(v, digits) for v in row) + "\n")


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else fmt(v)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_sidecar(path: str | Path, payload: dict) -> None:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8", newline="\n")


def histogram_1d_columns(h) -> tuple[list[str], list[np.ndarray]]:
    e = h.axes[0].edges
    return ["bin_left", "bin_right", "count"], [e[:-1], e[1:], h.counts.astype(np.int64)]


def histogram_2d_columns(h) -> tuple[list[str], list[np.ndarray]]:
    i, j = np.nonzero(h.counts)
    return ["i", "j", "count"], [i, j, h.counts[i, j].astype(np.int64)]


def histogram_meta(h) -> dict:
    return {
        "axes": [{"min": a.lo, "max": a.hi, "bins": a.bins} for a in h.axes],
        "total": h.total,
        "underflow": [int(h.buckets[d, 0]) for d in range(h.dims)],
        "overflow": [int(h.buckets[d, 1]) for d in range(h.dims)],
        "nonfinite": [int(h.buckets[d, 2]) for d in range(h.dims)],
    }
