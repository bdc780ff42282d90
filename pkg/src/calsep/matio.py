"""Headerless CSV matrix files, 17 significant digits (exact round trip)."""

from __future__ import annotations

from pathlib import Path

import numpy as np

FLOAT_FORMAT = "%.17g"


class MatrixParseError(ValueError):
    pass


def write_matrix(path, a: np.ndarray) -> None:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    lines = [",".join(FLOAT_FORMAT % x for x in row) for row in a]
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix(path) -> np.ndarray:
    text = Path(path).read_text().strip()
    if not text:
        raise MatrixParseError(f"{path}: empty matrix file")
    rows = []
    width = None
    for ln, line in enumerate(text.splitlines(), start=1):
        try:
            row = [float(tok) for tok in line.split(",")]
        except ValueError as exc:
            raise MatrixParseError(f"{path}:{ln}: {exc}") from exc
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise MatrixParseError(f"{path}:{ln}: expected {width} columns, got {len(row)}")
        rows.append(row)
    return np.array(rows, dtype=float)
