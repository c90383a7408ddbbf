"""Tactile dipole moment and tilt torque.

The zeroed displacement field's divergence plays the role of a charge
density. Its first moment about the midpoint of the positive and negative
divergence centroids is the tactile dipole moment ``p``, and the tilt torque
is that moment rotated by 90 degrees and scaled per axis:

    tau_x = c_x * p_y,    tau_y = -c_y * p_x

Axis convention: x, y span the gel surface and z points into the gel, so
pressing into the gel gives positive divergence. With positive calibration
constants the torques then follow the right-hand rule.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibration import CalibrationModel
from .errors import DegenerateField, NotZeroed
from .field import DisplacementField, DivergenceMap, ZeroReference, divergence, zero

DEFAULT_NOISE_FLOOR = 1e-4


@dataclass(frozen=True)
class CentroidPair:
    c_plus: np.ndarray
    c_minus: np.ndarray
    w_plus: float
    w_minus: float

    @property
    def no_contact(self):
        return self.w_plus == 0 and self.w_minus == 0

    @property
    def midpoint(self):
        return 0.5 * (self.c_plus + self.c_minus)


@dataclass(frozen=True)
class DipoleEstimate:
    p_tilt: np.ndarray
    midpoint: np.ndarray
    n_valid: int
    no_contact: bool = False


@dataclass(frozen=True)
class TiltTorque:
    tau_x: float
    tau_y: float
    calibrated: bool = False

    def as_array(self):
        return np.array([self.tau_x, self.tau_y])


def signed_centroids(div: DivergenceMap, noise_floor=DEFAULT_NOISE_FLOOR) -> CentroidPair:
    """Centroids of the positive and negative divergence regions.

    Nodes with ``|rho| <= noise_floor * max|rho|`` carry no centroid mass.
    An empty sign mask borrows the other mask's centroid; with both empty,
    both centroids sit at the centre of the valid nodes.
    """
    valid = div.valid
    if not valid.any():
        raise DegenerateField("divergence map has no valid nodes")
    X, Y = div.grid.coords()
    rho = np.where(valid, div.rho, 0.0)
    peak = np.max(np.abs(rho))
    thr = noise_floor * peak
    wp = np.where(rho > thr, rho, 0.0)
    wm = np.where(rho < -thr, -rho, 0.0)
    sp, sm = wp.sum(), wm.sum()
    cp = np.array([(wp * X).sum() / sp, (wp * Y).sum() / sp]) if sp > 0 else None
    cm = np.array([(wm * X).sum() / sm, (wm * Y).sum() / sm]) if sm > 0 else None
    if cp is None and cm is None:
        center = np.array([X[valid].mean(), Y[valid].mean()])
        cp = cm = center
    elif cp is None:
        cp = cm
    elif cm is None:
        cm = cp
    return CentroidPair(cp, cm, float(sp), float(sm))


def dipole_moment(div: DivergenceMap, centroids: CentroidPair) -> DipoleEstimate:
    """``p = (1/N) sum_i (x_i - m) rho_i`` over all N valid nodes."""
    valid = div.valid
    n = int(valid.sum())
    if n == 0:
        raise DegenerateField("divergence map has no valid nodes")
    X, Y = div.grid.coords()
    m = centroids.midpoint
    rho = div.rho[valid]
    p = np.array([((X[valid] - m[0]) * rho).sum(), ((Y[valid] - m[1]) * rho).sum()]) / n
    return DipoleEstimate(p, m, n, centroids.no_contact)


def tilt_torque(p: DipoleEstimate, cal: CalibrationModel = None) -> TiltTorque:
    if cal is None:
        return TiltTorque(float(p.p_tilt[1]), float(-p.p_tilt[0]), False)
    tx = cal.apply("x", p.p_tilt[1])
    ty = cal.apply("y", -p.p_tilt[0])
    return TiltTorque(float(tx), float(ty), cal.fitted)


def raw_tilt(p: DipoleEstimate):
    """Tilt torque with unit constants, the abscissa used for calibration."""
    return np.array([p.p_tilt[1], -p.p_tilt[0]])


def estimate_from_divergence(div: DivergenceMap, cal=None, noise_floor=DEFAULT_NOISE_FLOOR):
    dip = dipole_moment(div, signed_centroids(div, noise_floor))
    return tilt_torque(dip, cal), dip


def estimate(field: DisplacementField, ref: ZeroReference, cal: CalibrationModel = None,
             noise_floor=DEFAULT_NOISE_FLOOR):
    """Zero, differentiate and reduce one frame to ``(TiltTorque, DipoleEstimate)``."""
    if ref is None:
        raise NotZeroed("no zero reference established")
    return estimate_from_divergence(divergence(zero(field, ref)), cal, noise_floor)
