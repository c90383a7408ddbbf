"""CSV file formats.

Field CSV: header ``x_mm,y_mm,u,v,valid``, one row per node, row-major by
y then x. Wrench CSV: ``t,fx,fy,fz,tx,ty,tz``. Estimate CSV:
``t,tau_x,tau_y,p_x,p_y,m_x,m_y,method``. A frame directory may carry a
``frames.csv`` index (``index,t,file``) giving frame timestamps.

Floats are written with ``repr`` so files round-trip exactly and identical
inputs give byte-identical output.
"""
from __future__ import annotations

import csv
import os

import numpy as np

from .calibration import WRENCH_COLUMNS, WrenchTimeSeries
from .errors import FormatError
from .field import DisplacementField, GridSpec

FIELD_HEADER = ["x_mm", "y_mm", "u", "v", "valid"]
WRENCH_HEADER = ["t", *WRENCH_COLUMNS]
ESTIMATE_HEADER = ["t", "tau_x", "tau_y", "p_x", "p_y", "m_x", "m_y", "method"]
INDEX_NAME = "frames.csv"


def _f(x):
    return repr(float(x))


def format_field_csv(field: DisplacementField) -> str:
    X, Y = field.grid.coords()
    lines = [",".join(FIELD_HEADER)]
    for x, y, (u, v), ok in zip(X.ravel(), Y.ravel(), field.vectors.reshape(-1, 2),
                                field.valid.ravel()):
        lines.append(f"{_f(x)},{_f(y)},{_f(u)},{_f(v)},{int(ok)}")
    return "\n".join(lines) + "\n"


def write_field_csv(path, field: DisplacementField):
    with open(path, "w", newline="") as fh:
        fh.write(format_field_csv(field))


def parse_field_csv(text, frame_index=0, timestamp=0.0, name="<field>") -> DisplacementField:
    rows = list(csv.reader(text.splitlines()))
    if not rows or [c.strip() for c in rows[0]] != FIELD_HEADER:
        raise FormatError(f"{name}: expected header {','.join(FIELD_HEADER)}")
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise FormatError(f"{name}: {exc}") from exc
    if data.ndim != 2 or data.shape[1] != 5 or len(data) < 4:
        raise FormatError(f"{name}: need at least a 2x2 grid of 5-column rows")
    y0 = data[0, 1]
    width = int(np.argmax(data[:, 1] != y0)) if np.any(data[:, 1] != y0) else len(data)
    if width < 2 or len(data) % width:
        raise FormatError(f"{name}: rows do not form a row-major grid")
    height = len(data) // width
    pitch = data[1, 0] - data[0, 0]
    if not pitch > 0:
        raise FormatError(f"{name}: x must increase along a row")
    grid = GridSpec(width, height, pitch, (data[0, 0], y0))
    X, Y = grid.coords()
    tol = 1e-6 * pitch
    if (np.abs(X.ravel() - data[:, 0]).max() > tol or np.abs(Y.ravel() - data[:, 1]).max() > tol):
        raise FormatError(f"{name}: node coordinates are not a regular grid")
    valid = data[:, 4] != 0
    try:
        return DisplacementField(grid, data[:, 2:4], valid, frame_index, timestamp)
    except ValueError as exc:
        raise FormatError(f"{name}: {exc}") from exc


def read_field_csv(path, frame_index=0, timestamp=0.0) -> DisplacementField:
    with open(path) as fh:
        return parse_field_csv(fh.read(), frame_index, timestamp, str(path))


def write_wrench_csv(path, series: WrenchTimeSeries):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WRENCH_HEADER)
        for t, row in zip(series.times, series.wrench):
            w.writerow([_f(t), *map(_f, row)])


def read_wrench_csv(path) -> WrenchTimeSeries:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != WRENCH_HEADER:
        raise FormatError(f"{path}: expected header {','.join(WRENCH_HEADER)}")
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    data = data.reshape(-1, 7)
    return WrenchTimeSeries(data[:, 0], data[:, 1:])


def write_estimates_csv(fh, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(ESTIMATE_HEADER)
    for r in rows:
        w.writerow([_f(r.t), _f(r.tau_x), _f(r.tau_y), _f(r.p[0]), _f(r.p[1]),
                    _f(r.m[0]), _f(r.m[1]), r.method])


def read_estimates_csv(path):
    """Returns ``(times, p (n, 2), method)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ESTIMATE_HEADER:
        raise FormatError(f"{path}: expected header {','.join(ESTIMATE_HEADER)}")
    body = [r for r in rows[1:] if r]
    methods = {r[7] for r in body}
    if len(methods) > 1:
        raise FormatError(f"{path}: mixed estimator methods {sorted(methods)}")
    try:
        data = np.array([[float(c) for c in r[:7]] for r in body], dtype=float).reshape(-1, 7)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return data[:, 0], data[:, 3:5], (methods.pop() if methods else "dipole")


def write_index(directory, entries):
    """``entries`` is a list of ``(index, t, filename)``."""
    with open(os.path.join(directory, INDEX_NAME), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "t", "file"])
        for i, t, name in entries:
            w.writerow([int(i), _f(t), name])


def read_index(directory):
    """Map of filename to ``(index, t)``; empty when no index exists."""
    path = os.path.join(directory, INDEX_NAME)
    if not os.path.exists(path):
        return {}
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    try:
        return {r["file"]: (int(r["index"]), float(r["t"])) for r in rows}
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
