"""Time alignment, per-axis linear calibration and evaluation metrics.

All sums go through :func:`math.fsum`, which is correctly rounded and
therefore independent of sample order: permuting a dataset leaves every
fitted number bit-identical.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EmptySeries, FormatError, NonMonotoneTime, NoOverlap, RankDeficient

WRENCH_COLUMNS = ("fx", "fy", "fz", "tx", "ty", "tz")
AXES = ("x", "y")


@dataclass(frozen=True, eq=False)
class WrenchTimeSeries:
    """Timestamped 6D wrench samples, columns ``fx fy fz tx ty tz``."""

    times: np.ndarray
    wrench: np.ndarray
    rate_hint: Optional[float] = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        w = np.asarray(self.wrench, dtype=float).reshape(len(t), 6)
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise NonMonotoneTime("wrench timestamps must be strictly increasing")
        t.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "wrench", w)

    def __len__(self):
        return len(self.times)

    def column(self, name):
        return self.wrench[:, WRENCH_COLUMNS.index(name)]


def resample(truth: WrenchTimeSeries, query_times):
    """Linearly interpolate ``truth`` at ``query_times``.

    Queries outside ``[first, last]`` truth timestamp are dropped. Returns
    ``(series, kept, n_dropped)`` where ``kept`` is the boolean mask over the
    original queries.
    """
    q = np.asarray(query_times, dtype=float).reshape(-1)
    if len(truth) == 0:
        raise EmptySeries("ground-truth series is empty")
    if len(q) == 0:
        raise EmptySeries("no query timestamps")
    t = truth.times
    kept = (q >= t[0]) & (q <= t[-1])
    if not kept.any():
        raise NoOverlap(f"query span [{q.min()}, {q.max()}] misses truth span [{t[0]}, {t[-1]}]")
    qk = q[kept]
    out = np.column_stack([np.interp(qk, t, truth.wrench[:, k]) for k in range(6)])
    rate = None
    if len(qk) > 1:
        rate = float((len(qk) - 1) / (qk[-1] - qk[0]))
    return WrenchTimeSeries(qk, out, rate), kept, int((~kept).sum())


@dataclass
class AxisFit:
    slope: float
    intercept: Optional[float]
    rmse: float
    n_points: int


def fit_axis(raw, truth, with_intercept=False) -> AxisFit:
    """Least-squares ``truth ~ slope * raw (+ intercept)``."""
    x = [float(a) for a in np.asarray(raw, dtype=float).reshape(-1)]
    y = [float(b) for b in np.asarray(truth, dtype=float).reshape(-1)]
    if len(x) != len(y):
        raise ValueError("raw and truth lengths differ")
    if len(x) < 2 or len(set(x)) < 2:
        raise RankDeficient("need at least two distinct abscissae")
    n = len(x)
    if with_intercept:
        mx = math.fsum(x) / n
        my = math.fsum(y) / n
        sxx = math.fsum((a - mx) * (a - mx) for a in x)
        sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
        slope = sxy / sxx
        icpt = my - slope * mx
    else:
        sxx = math.fsum(a * a for a in x)
        slope = math.fsum(a * b for a, b in zip(x, y)) / sxx
        icpt = None
    b0 = icpt or 0.0
    rmse = math.sqrt(math.fsum((b - slope * a - b0) ** 2 for a, b in zip(x, y)) / n)
    return AxisFit(slope, icpt, rmse, n)


@dataclass
class CalibrationModel:
    """Per-axis scale factors from raw tilt torque to N*mm.

    ``c_x`` and ``c_y`` multiply the raw (unit-constant) tilt torque on their
    axis. For the dipole method that is exactly ``tau = (c_x p_y, -c_y p_x)``.
    For the baseline method ``c_x``/``c_y`` act as per-axis normal-force
    scales, and ``c_z`` holds their pooled single-constant equivalent.
    """

    c_x: float = 1.0
    c_y: float = 1.0
    c_z: float = 1.0
    rmse: dict = field(default_factory=lambda: {"x": None, "y": None})
    n_points: dict = field(default_factory=lambda: {"x": 0, "y": 0})
    intercept: dict = field(default_factory=lambda: {"x": None, "y": None})
    fitted_with_intercept: bool = False
    method: str = "dipole"
    created_from: str = ""

    @classmethod
    def identity(cls, method="dipole"):
        return cls(method=method)

    @property
    def fitted(self):
        return any(self.n_points.get(a, 0) >= 2 for a in AXES)

    @property
    def fit_slope(self):
        return {"x": self.c_x, "y": self.c_y}

    def scale(self, axis):
        return self.c_x if axis == "x" else self.c_y

    def apply(self, axis, raw):
        """Calibrated torque on ``axis`` from raw tilt torque values."""
        out = self.scale(axis) * np.asarray(raw, dtype=float)
        b = self.intercept.get(axis)
        return out + b if b is not None else out

    def to_json(self):
        doc = {
            "c_x": self.c_x,
            "c_y": self.c_y,
            "c_z": self.c_z,
            "intercepts": {a: self.intercept.get(a) for a in AXES},
            "rmse": {a: self.rmse.get(a) for a in AXES},
            "n_points": {a: int(self.n_points.get(a, 0)) for a in AXES},
            "method": self.method,
            "created_from": self.created_from,
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
            intercepts = {a: doc["intercepts"].get(a) for a in AXES}
            return cls(
                c_x=float(doc["c_x"]),
                c_y=float(doc["c_y"]),
                c_z=float(doc["c_z"]),
                rmse={a: doc["rmse"].get(a) for a in AXES},
                n_points={a: int(doc["n_points"].get(a, 0)) for a in AXES},
                intercept=intercepts,
                fitted_with_intercept=any(v is not None for v in intercepts.values()),
                method=str(doc["method"]),
                created_from=str(doc["created_from"]),
            )
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise FormatError(f"bad calibration file: {exc}") from exc

    def save(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())


def fit(pairs, with_intercept=False, method="dipole", created_from="") -> CalibrationModel:
    """Fit per-axis scales.

    ``pairs`` maps ``"x"``/``"y"`` to ``(raw, truth)`` arrays, where ``raw`` is
    the tilt torque computed with unit constants (for the dipole method
    ``raw_x = p_y`` and ``raw_y = -p_x``).
    """
    if not pairs:
        raise EmptySeries("no axes to fit")
    cal = CalibrationModel(method=method, created_from=created_from,
                           fitted_with_intercept=with_intercept)
    raw_all, truth_all = [], []
    for axis in AXES:
        if axis not in pairs:
            continue
        raw, truth = pairs[axis]
        res = fit_axis(raw, truth, with_intercept)
        setattr(cal, f"c_{axis}", res.slope)
        cal.rmse[axis] = res.rmse
        cal.n_points[axis] = res.n_points
        cal.intercept[axis] = res.intercept
        raw_all.append(np.asarray(raw, float).reshape(-1))
        truth_all.append(np.asarray(truth, float).reshape(-1))
    if method == "baseline":
        cal.c_z = fit_axis(np.concatenate(raw_all), np.concatenate(truth_all)).slope
    return cal


@dataclass
class AxisReport:
    slope: float
    rmse: float
    r2: float
    n: int


@dataclass
class EvaluationReport:
    method: str
    axes: dict
    scatter: list

    def to_dict(self):
        return {
            "method": self.method,
            "axes": {a: vars(r) for a, r in self.axes.items()},
        }

    def write_scatter(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["truth", "estimate", "axis", "method"])
            for t, e, a, m in self.scatter:
                w.writerow([repr(float(t)), repr(float(e)), a, m])


def metrics(estimate, truth) -> AxisReport:
    """Slope (estimate on truth, through origin), RMSE and R^2."""
    e = [float(a) for a in np.asarray(estimate, dtype=float).reshape(-1)]
    t = [float(b) for b in np.asarray(truth, dtype=float).reshape(-1)]
    if not e:
        raise EmptySeries("no held-out samples")
    n = len(e)
    stt = math.fsum(b * b for b in t)
    slope = math.fsum(a * b for a, b in zip(e, t)) / stt if stt > 0 else float("nan")
    ss_res = math.fsum((b - a) ** 2 for a, b in zip(e, t))
    tm = math.fsum(t) / n
    ss_tot = math.fsum((b - tm) ** 2 for b in t)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")
    return AxisReport(slope, math.sqrt(ss_res / n), r2, n)


def evaluate(cal: CalibrationModel, pairs, method=None) -> EvaluationReport:
    """Score calibrated estimates on held-out ``{axis: (raw, truth)}`` pairs."""
    method = method or cal.method
    if not pairs or all(len(np.asarray(p[0]).reshape(-1)) == 0 for p in pairs.values()):
        raise EmptySeries("held-out set is empty")
    axes, scatter = {}, []
    for axis in AXES:
        if axis not in pairs:
            continue
        raw, truth = pairs[axis]
        est = cal.apply(axis, raw)
        axes[axis] = metrics(est, truth)
        scatter.extend((t, e, axis, method) for t, e in zip(np.asarray(truth).reshape(-1), est))
    return EvaluationReport(method, axes, scatter)
