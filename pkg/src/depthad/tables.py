"""CSV data files and tab-separated report tables.

Data files are comma separated with an optional header row, recognised by a
non-numeric first line.  A column named ``label`` holds anomaly flags (0/1)
and is split off on reading.  Numbers are written with 17 significant digits
so files round-trip exactly.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import DepthError

LABEL_COLUMN = "label"


class ParseError(DepthError, ValueError):
    """A data file could not be parsed; the message names file and line."""


@dataclass(frozen=True, eq=False)
class Table:
    data: np.ndarray
    header: list[str] | None
    labels: np.ndarray | None


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return "%.17g" % v
    return str(value)


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def parse_csv(text: str, source: str = "<input>") -> Table:
    lines = text.splitlines()
    rows = []
    for lineno, line in enumerate(lines, start=1):
        if line.strip() == "":
            continue
        rows.append((lineno, [c.strip() for c in line.split(",")]))
    if not rows:
        return Table(np.empty((0, 0)), None, None)
    header = None
    first_line, first = rows[0]
    if not all(_is_number(c) for c in first):
        header = first
        rows = rows[1:]
    width = len(header) if header is not None else len(first)
    values = np.empty((len(rows), width))
    for r, (lineno, cells) in enumerate(rows):
        if len(cells) != width:
            raise ParseError(f"{source}, line {lineno}: expected {width} fields, found {len(cells)}")
        for c, cell in enumerate(cells):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"{source}, line {lineno}: field {c + 1} ({cell!r}) is not a number") from None
            if not math.isfinite(v):
                raise ParseError(f"{source}, line {lineno}: field {c + 1} is not finite")
            values[r, c] = v
    labels = None
    if header is not None and LABEL_COLUMN in header:
        k = header.index(LABEL_COLUMN)
        col = values[:, k]
        if not np.all((col == 0) | (col == 1)):
            raise ParseError(f"{source}: column {LABEL_COLUMN!r} must contain only 0 and 1")
        labels = col.astype(bool)
        values = np.delete(values, k, axis=1)
        header = header[:k] + header[k + 1:]
    return Table(values, header, labels)


def read_csv(path) -> Table:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError:
        raise ParseError(f"{path}: not UTF-8 text") from None
    return parse_csv(text, str(path))


def csv_text(data, header=None, labels=None) -> str:
    X = np.asarray(data, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    d = X.shape[1]
    if header is None:
        header = [f"x{j + 1}" for j in range(d)]
    out = io.StringIO()
    cols = list(header) + ([LABEL_COLUMN] if labels is not None else [])
    out.write(",".join(cols) + "\n")
    for i in range(X.shape[0]):
        cells = [fmt(v) for v in X[i]]
        if labels is not None:
            cells.append("1" if labels[i] else "0")
        out.write(",".join(cells) + "\n")
    return out.getvalue()


def write_csv(path, data, header=None, labels=None) -> None:
    Path(path).write_text(csv_text(data, header, labels), encoding="utf-8")


def tsv_text(header, rows, footer: list[str] | None = None) -> str:
    out = io.StringIO()
    out.write("\t".join(header) + "\n")
    for row in rows:
        out.write("\t".join(fmt(v) for v in row) + "\n")
    for line in footer or []:
        out.write(line + "\n")
    return out.getvalue()


def write_tsv(path, header, rows, footer: list[str] | None = None) -> None:
    Path(path).write_text(tsv_text(header, rows, footer), encoding="utf-8")


def read_tsv(path) -> tuple[list[str], list[list[str]]]:
    """Header and raw string rows; comment lines starting with '#' are skipped."""
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln and not ln.startswith("#")]
    header = lines[0].split("\t")
    return header, [ln.split("\t") for ln in lines[1:]]
