"""CSV ingestion."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .exceptions import ContractError, DataError, UsageError
from .linalg import Dataset


def parse_csv(path, response_cols, predictor_cols, intercept: bool = False):
    """Read the named columns of a headed CSV file into a :class:`Dataset`.

    With ``intercept`` a constant-1 predictor is appended as the last column.
    Returns ``(data, predictor_names, response_names)``.
    """
    response_cols = list(response_cols)
    predictor_cols = list(predictor_cols)
    if not response_cols or not predictor_cols:
        raise UsageError("need at least one response and one predictor column")
    overlap = set(response_cols) & set(predictor_cols)
    if overlap:
        raise UsageError(f"columns used as both response and predictor: {sorted(overlap)}")
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path} is empty")
        header = [h.strip() for h in header]
        missing = [c for c in response_cols + predictor_cols if c not in header]
        if missing:
            raise UsageError(f"columns not found in {path}: {', '.join(missing)}")
        cols = [header.index(c) for c in response_cols + predictor_cols]
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            vals = []
            for name, j in zip(response_cols + predictor_cols, cols):
                cell = rec[j].strip() if j < len(rec) else ""
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"line {lineno}, column {name!r}: {cell!r} is not a number") from None
                if not math.isfinite(v):
                    raise DataError(f"line {lineno}, column {name!r}: non-finite value {cell!r}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path} has a header but no data rows")
    A = np.array(rows)
    q = len(response_cols)
    Y, X = A[:, :q], A[:, q:]
    names = list(predictor_cols)
    if intercept:
        X = np.hstack([X, np.ones((X.shape[0], 1))])
        names.append("(intercept)")
    try:
        data = Dataset(X, Y)
    except ContractError as exc:
        raise DataError(str(exc)) from None
    return data, names, response_cols
