"""Frame-by-frame estimation with an owned, swappable zero reference."""
from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .baseline import raw_baseline_tilt
from .calibration import CalibrationModel
from .dipole import DEFAULT_NOISE_FLOOR, estimate
from .errors import NotZeroed
from .field import DisplacementField, ZeroReference, zero

METHODS = ("dipole", "baseline")


@dataclass(frozen=True)
class EstimateRow:
    t: float
    tau_x: float
    tau_y: float
    p: np.ndarray
    m: np.ndarray
    method: str
    no_contact: bool = False

    @property
    def raw(self):
        """Unit-constant tilt torque, ``(p_y, -p_x)``."""
        return np.array([self.p[1], -self.p[0]])


class TactilePipeline:
    """Holds the zero reference and calibration for a stream of fields.

    For the baseline method ``p`` is reported as the equivalent dipole, the
    vector whose rotation ``(p_y, -p_x)`` gives the raw baseline tilt, so
    both methods share one output schema and one calibration path. ``m`` is
    then the grid centre used for the baseline's moment arms.

    The reference is whatever frame ``rezero`` received. The dipole method
    expects the post-grasp frame. The baseline measures displacement from the
    undeformed gel, so it is normally given the pre-contact frame; against a
    post-grasp reference its norm is blind to the sign of a pure tilt.
    """

    def __init__(self, cal: CalibrationModel = None, method="dipole",
                 noise_floor=DEFAULT_NOISE_FLOOR):
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
        self.cal = cal or CalibrationModel.identity(method)
        self.method = method
        self.noise_floor = noise_floor
        self._ref = None
        self._lock = threading.Lock()

    @property
    def reference(self):
        return self._ref

    def rezero(self, field: DisplacementField):
        ref = ZeroReference.capture(field)
        with self._lock:
            self._ref = ref
        return ref

    def process(self, field: DisplacementField) -> EstimateRow:
        ref = self._ref
        if ref is None:
            raise NotZeroed("call rezero() before processing frames")
        if self.method == "dipole":
            tau, dip = estimate(field, ref, self.cal, self.noise_floor)
            return EstimateRow(field.timestamp, tau.tau_x, tau.tau_y, dip.p_tilt, dip.midpoint,
                               "dipole", dip.no_contact)
        raw = raw_baseline_tilt(zero(field, ref))
        tx = float(self.cal.apply("x", raw[0]))
        ty = float(self.cal.apply("y", raw[1]))
        p = np.array([-raw[1], raw[0]])
        return EstimateRow(field.timestamp, tx, ty, p, field.grid.center, "baseline")
