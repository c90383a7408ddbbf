"""Norm-based baseline torque estimator and planar wrench approximations.

The baseline treats each node's displacement as a force
``f_i = (c_x u_i, c_y v_i, c_z |v_i|)`` and averages ``l_i x f_i`` with the
moment arm ``l_i`` measured from the centre of the full grid. Because
``|v|`` is blind to the field's sign pattern, shear and spreading motions
both register as normal force.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateField
from .field import DisplacementField


@dataclass(frozen=True, eq=False)
class PointwiseForce:
    f: np.ndarray  # (height, width, 3)
    valid: np.ndarray


@dataclass(frozen=True)
class BaselineWrench:
    tau: np.ndarray

    @property
    def tilt(self):
        return self.tau[:2]


def pointwise_force(field: DisplacementField, c=(1.0, 1.0, 1.0)) -> PointwiseForce:
    cx, cy, cz = c
    u, v = field.u, field.v
    f = np.stack([cx * u, cy * v, cz * np.hypot(u, v)], axis=-1)
    return PointwiseForce(f, field.valid)


def baseline_torque(field: DisplacementField, c=(1.0, 1.0, 1.0)) -> BaselineWrench:
    """``tau = (1/N) sum_i l_i x f_i`` with arms from the grid centre."""
    n = field.n_valid
    if n == 0:
        raise DegenerateField("field has no valid nodes")
    X, Y = field.grid.coords()
    cx0, cy0 = field.grid.center
    sel = field.valid
    lx = (X - cx0)[sel]
    ly = (Y - cy0)[sel]
    f = pointwise_force(field, c).f[sel]
    tau = np.array([
        (ly * f[:, 2]).sum(),
        (-lx * f[:, 2]).sum(),
        (lx * f[:, 1] - ly * f[:, 0]).sum(),
    ]) / n
    return BaselineWrench(tau)


def raw_baseline_tilt(field: DisplacementField):
    """Baseline tilt torque with unit constants (calibration abscissa)."""
    return baseline_torque(field).tilt


def planar_wrench(field: DisplacementField):
    """Approximate shear and in-plane torque.

    Shear is the mean displacement. ``tau_z`` is the mean of
    ``(l_i x v_i)_z`` with arms from the valid-node centroid. This is a
    simple rotational-moment surrogate, not a calibrated in-plane torque
    model.
    """
    n = field.n_valid
    if n == 0:
        raise DegenerateField("field has no valid nodes")
    X, Y = field.grid.coords()
    sel = field.valid
    x, y = X[sel], Y[sel]
    u, v = field.u[sel], field.v[sel]
    shear = np.array([u.mean(), v.mean()])
    lx = x - x.mean()
    ly = y - y.mean()
    tau_z = float((lx * v - ly * u).sum() / n)
    return shear, tau_z
