"""Labeled numeric CSV reading and round-trippable writing."""

from __future__ import annotations

import csv
import io

import numpy as np
from numpy.typing import NDArray

from .errors import ParseError


def fmt(v) -> str:
    """17 significant digits for floats, plain str otherwise."""
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def read_labeled_csv(text: str) -> tuple[NDArray[np.float64], list[str], list[str]]:
    """Parse ``header of column labels`` + numeric rows.

    A leading column of row labels is recognised when the first field of the
    first data row is not a number; it is returned as the row labels
    (otherwise rows are labelled ``1..T``).
    """
    parsed = [(i + 1, r) for i, r in enumerate(csv.reader(io.StringIO(text)))
              if r and any(c.strip() for c in r)]
    if len(parsed) < 2:
        raise ParseError("need a header row and at least one data row", line=len(parsed) or 1)
    header = [c.strip() for c in parsed[0][1]]
    try:
        float(parsed[1][1][0])
        labelled = False
    except ValueError:
        labelled = True
    columns = header[1:] if labelled else header
    row_labels, values = [], []
    for lineno, r in parsed[1:]:
        if len(r) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(r)}", line=lineno)
        cells = r[1:] if labelled else r
        try:
            values.append([float(c) for c in cells])
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
        row_labels.append(r[0].strip() if labelled else str(len(row_labels) + 1))
    return np.array(values, dtype=np.float64), row_labels, columns


def write_matrix_csv(matrix, labels) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(labels)
    for row in np.asarray(matrix):
        w.writerow([fmt(float(x)) for x in row])
    return buf.getvalue()
