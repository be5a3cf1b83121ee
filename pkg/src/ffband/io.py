"""CSV readers and writers.

Curve files have a header ``t,curve_1,...,curve_n``; the first column holds
the grid points and every further column one curve. An empty cell marks a
missing value (fragments). Files are UTF-8 with LF line ends.
"""

from __future__ import annotations

import csv
import math
from importlib import resources
from pathlib import Path

import numpy as np

from ffband.errors import InputError
from ffband.process import FunctionalSample, Grid


def data_path(name: str) -> Path:
    """Path of a file bundled in ``ffband/data``."""
    p = Path(str(resources.files("ffband") / "data" / name))
    if not p.exists():
        raise InputError(f"no bundled data file {name!r}")
    return p


def _read_rows(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise InputError(f"{path} is not UTF-8 text") from None
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise InputError(f"{path} is empty")
    return rows


def _parse(cell: str, path, row: int, col: str, allow_missing: bool):
    cell = cell.strip()
    if cell == "":
        if allow_missing:
            return math.nan
        raise InputError(f"{path}: row {row}, column {col!r}: value is missing")
    try:
        x = float(cell)
    except ValueError:
        raise InputError(f"{path}: row {row}, column {col!r}: {cell!r} is not a number") from None
    if not math.isfinite(x):
        raise InputError(f"{path}: row {row}, column {col!r}: value must be finite")
    return x


def read_curves_csv(path) -> FunctionalSample:
    rows = _read_rows(path)
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[0] != "t":
        raise InputError(f"{path}: header must be 't,curve_1,...,curve_n'")
    body = rows[1:]
    if len(body) < 3:
        raise InputError(f"{path}: need at least 3 grid points, found {len(body)}")
    t = np.empty(len(body))
    x = np.empty((len(body), len(header) - 1))
    for i, r in enumerate(body):
        line = i + 2
        if len(r) != len(header):
            raise InputError(f"{path}: row {line} has {len(r)} cells, expected {len(header)}")
        t[i] = _parse(r[0], path, line, "t", False)
        for j in range(1, len(header)):
            x[i, j - 1] = _parse(r[j], path, line, header[j], True)
    try:
        grid = Grid(t)
    except InputError as exc:
        raise InputError(f"{path}: column 't': {exc}") from None
    curves = x.T
    empty = np.flatnonzero(~np.isfinite(curves).any(axis=1))
    if empty.size:
        raise InputError(f"{path}: column {header[empty[0] + 1]!r} has no observed values")
    return FunctionalSample(grid, curves)


def read_function_csv(path, grid: Grid) -> np.ndarray:
    """A single function ``t,value`` on ``grid`` (e.g. the hypothesised mean)."""
    rows = _read_rows(path)
    header = [h.strip() for h in rows[0]]
    if len(header) != 2 or header[0] != "t":
        raise InputError(f"{path}: header must be 't,<name>'")
    body = rows[1:]
    if len(body) != grid.size:
        raise InputError(f"{path}: has {len(body)} grid points, the curves have {grid.size}")
    t = np.array([_parse(r[0], path, i + 2, "t", False) for i, r in enumerate(body)])
    if np.max(np.abs(t - grid.points)) > 1e-9:
        i = int(np.argmax(np.abs(t - grid.points)))
        raise InputError(f"{path}: row {i + 2}, column 't': grid point differs from the curve file")
    return np.array([_parse(r[1], path, i + 2, header[1], False) for i, r in enumerate(body)])


def write_curves_csv(path, sample: FunctionalSample):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"curve_{i + 1}" for i in range(sample.n)])
        for j, t in enumerate(sample.grid.points):
            col = sample.curves[:, j]
            obs = sample.mask[:, j]
            w.writerow([repr(float(t))] + [repr(float(v)) if o else "" for v, o in zip(col, obs)])


def write_columns_csv(path, columns: dict):
    keys = list(columns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for row in zip(*(columns[k] for k in keys)):
            w.writerow([repr(float(v)) for v in row])
