"""CSV ingestion shared by the plot scripts."""

import warnings

import numpy as np


class FigureInputError(ValueError):
    """The input CSV cannot be plotted (missing columns, bad grid, ...)."""


def read_columns(path, required):
    """Load a header-line CSV and return {column: array}, validating that
    every required column is present and non-empty."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # empty-file warning becomes an error below
            data = np.genfromtxt(path, delimiter=",", names=True)
    except (OSError, ValueError, IndexError) as err:
        raise FigureInputError(f"cannot read {path}: {err}") from err
    if data.dtype.names is None:
        raise FigureInputError(f"{path}: no header row")
    missing = [c for c in required if c not in data.dtype.names]
    if missing:
        raise FigureInputError(f"{path}: missing columns {missing}")
    data = np.atleast_1d(data)
    if data.size == 0:
        raise FigureInputError(f"{path}: no data rows")
    cols = {c: np.asarray(data[c], dtype=float) for c in data.dtype.names}
    for c in required:
        if not np.all(np.isfinite(cols[c])):
            raise FigureInputError(f"{path}: column {c} has non-finite entries")
    return cols


def default_output(path, suffix):
    from pathlib import Path
    p = Path(path)
    return str(p.with_name(p.stem + suffix + ".png"))
