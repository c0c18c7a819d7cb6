"""CSV ingestion and emission.

Input files hold one trial per row with an optional header row. Output CSV is
UTF-8, comma separated, with a header row and floats at 17 significant digits.
"""

from __future__ import annotations

import csv
import math
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .statcore import RankMatrix


def fmt(value) -> str:
    """Format a cell: floats at 17 significant digits, everything else via ``str``."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, Fraction):
        return f"{float(value):.17g}"
    if isinstance(value, (float, np.floating)):
        return "inf" if math.isinf(value) and value > 0 else f"{float(value):.17g}"
    if isinstance(value, (tuple, list)):
        return " ".join(fmt(v) for v in value)
    return str(value)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_gnuplot(path, header, rows):
    """Whitespace-separated columns with a ``#`` comment header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for row in rows:
            fh.write(" ".join(fmt(v) for v in row) + "\n")


def _integer_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        raw = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if not raw:
        raise ValidationError(f"{path}: no data rows")
    out = []
    for i, row in enumerate(raw, start=1):
        try:
            out.append([int(c.strip()) for c in row])
        except ValueError:
            if i == 1:
                continue  # header
            raise ValidationError(f"{path}: row {i} is not a list of integers: {row}", row=i) from None
    if not out:
        raise ValidationError(f"{path}: no data rows")
    width = {len(r) for r in out}
    if len(width) != 1:
        raise ValidationError(f"{path}: rows have differing lengths {sorted(width)}")
    return out


def read_ranks(path) -> RankMatrix:
    """Rank matrix from CSV: one trial (a permutation of 1..r) per row."""
    return RankMatrix.from_rows(_integer_rows(path))


def read_counts(path) -> np.ndarray:
    """Cell counts from CSV: one trial per row (a one-hot row or per-trial counts), summed over rows."""
    rows = np.array(_integer_rows(path), dtype=np.int64)
    if np.any(rows < 0):
        bad = int(np.argwhere(rows < 0)[0, 0]) + 1
        raise ValidationError(f"{path}: negative count in data row {bad}", row=bad)
    return rows.sum(axis=0)
