"""Linear quasi-static gel model used as a ground-truth oracle.

A displacement field is the superposition of

* a uniform translation proportional to the shear force (f_x, f_y),
* the gradient of the open-boundary potential of a uniform charge on the
  contact patch, proportional to the normal force f_z,
* the rotated gradient of the potential of a uniform vorticity on the patch,
  proportional to the in-plane torque tau_z,
* the gradient of the potential of a charge density linear in the signed
  distance from the tilt axis (through the patch centroid), proportional to
  the tilt torque (tau_x, tau_y),

plus optional isotropic Gaussian noise. z points into the gel: f_z > 0
compresses the gel, and a positive tau_x presses the +y side of the patch
into it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .calibration import WrenchTimeSeries
from .errors import NonMonotoneTime, PatchOutOfBounds
from .field import DisplacementField, GridSpec, gradient
from .nhhd import green_potential


@dataclass(frozen=True)
class GelModel:
    shear_compliance: float = 0.05   # mm per N
    normal_gain: float = 5.0         # strain * mm^2 per N
    tilt_gain: float = 5e-3          # strain per (N*mm * mm)
    twist_gain: float = 0.2          # strain * mm^2 per N*mm


DEFAULT_MODEL = GelModel()


@dataclass(frozen=True, eq=False)
class ContactPatch:
    """Contact region on the gel.

    ``kind`` is ``"disc"`` (``radius``), ``"rect"`` (``size``) or ``"mask"``
    (explicit boolean node mask). ``center=None`` means the grid centre.
    """

    kind: str
    radius: float = 0.0
    size: tuple = (0.0, 0.0)
    mask: Optional[np.ndarray] = None
    center: Optional[tuple] = None
    pressure_scale: float = 1.0

    @classmethod
    def disc(cls, radius, center=None, pressure_scale=1.0):
        return cls("disc", radius=float(radius), center=center, pressure_scale=pressure_scale)

    @classmethod
    def rect(cls, width, height, center=None, pressure_scale=1.0):
        return cls("rect", size=(float(width), float(height)), center=center,
                   pressure_scale=pressure_scale)

    @classmethod
    def from_mask(cls, mask, pressure_scale=1.0):
        return cls("mask", mask=np.asarray(mask, bool), pressure_scale=pressure_scale)

    def node_mask(self, grid: GridSpec):
        """Boolean node mask of the patch on ``grid``; validates bounds."""
        X, Y = grid.coords()
        c = grid.center if self.center is None else np.asarray(self.center, float)
        xmin, xmax, ymin, ymax = grid.bounds
        eps = 1e-9 * grid.pitch
        if self.kind == "disc":
            if self.radius <= 0:
                raise PatchOutOfBounds("disc radius must be positive")
            half = (self.radius, self.radius)
            m = (X - c[0]) ** 2 + (Y - c[1]) ** 2 <= self.radius ** 2 + eps
        elif self.kind == "rect":
            if min(self.size) <= 0:
                raise PatchOutOfBounds("rectangle sides must be positive")
            half = (0.5 * self.size[0], 0.5 * self.size[1])
            m = (np.abs(X - c[0]) <= half[0] + eps) & (np.abs(Y - c[1]) <= half[1] + eps)
        elif self.kind == "mask":
            if self.mask is None or self.mask.shape != grid.shape:
                raise PatchOutOfBounds("explicit mask does not match the grid")
            m = self.mask.copy()
            half = None
        else:
            raise ValueError(f"unknown patch kind {self.kind!r}")
        if half is not None and (c[0] - half[0] < xmin - eps or c[0] + half[0] > xmax + eps
                                 or c[1] - half[1] < ymin - eps or c[1] + half[1] > ymax + eps):
            raise PatchOutOfBounds(f"{self.kind} patch at {tuple(c)} leaves the grid")
        if not m.any():
            raise PatchOutOfBounds("patch covers no grid node")
        return m


def square_peg(grid, width=10.0, length=None, axis="x", pressure_scale=1.0):
    """Flat face of a square peg lying along ``axis``: a ``width``-wide strip."""
    xmin, xmax, ymin, ymax = grid.bounds
    if length is None:
        length = 0.9 * ((xmax - xmin) if axis == "x" else (ymax - ymin))
    w, h = (length, width) if axis == "x" else (width, length)
    return ContactPatch.rect(w, h, pressure_scale=pressure_scale)


def round_peg(grid, diameter=10.0, length=None, axis="x", contact_fraction=0.6,
              pressure_scale=1.0):
    """Line-like contact of a cylinder lying along ``axis``.

    Only a band of ``contact_fraction * diameter`` around the generatrix
    touches the gel.
    """
    return square_peg(grid, contact_fraction * diameter, length, axis, pressure_scale)


@dataclass(frozen=True)
class AppliedWrench:
    f: tuple = (0.0, 0.0, 0.0)
    tau: tuple = (0.0, 0.0, 0.0)
    timestamp: float = 0.0

    def __post_init__(self):
        f = tuple(float(a) for a in self.f)
        tau = tuple(float(a) for a in self.tau)
        if len(f) != 3 or len(tau) != 3 or not np.all(np.isfinite(f + tau)):
            raise ValueError("wrench must hold three finite force and torque components")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "tau", tau)

    def as_array(self):
        return np.array(self.f + self.tau)

    def __add__(self, other):
        a = self.as_array() + other.as_array()
        return AppliedWrench(tuple(a[:3]), tuple(a[3:]), self.timestamp)


def charge_densities(w: AppliedWrench, patch: ContactPatch, grid: GridSpec, model=DEFAULT_MODEL):
    """Node charge (divergence source) and vorticity for wrench ``w``."""
    m = patch.node_mask(grid)
    X, Y = grid.coords()
    area = m.sum() * grid.pitch ** 2
    cx, cy = X[m].mean(), Y[m].mean()
    fx, fy, fz = w.f
    tx, ty, tz = w.tau
    ps = patch.pressure_scale
    q = np.zeros(grid.shape)
    q[m] = ps * (model.normal_gain * fz / area
                 + model.tilt_gain * (tx * (Y[m] - cy) - ty * (X[m] - cx)))
    omega = np.zeros(grid.shape)
    omega[m] = model.twist_gain * tz / area
    return q, omega


def synth_field(w: AppliedWrench, patch: ContactPatch, grid: GridSpec, noise_sigma=0.0,
                rng=None, model=DEFAULT_MODEL, frame_index=0) -> DisplacementField:
    """Displacement field for wrench ``w`` (see module docstring)."""
    q, omega = charge_densities(w, patch, grid, model)
    vec = np.zeros(grid.shape + (2,))
    vec[..., 0] = model.shear_compliance * w.f[0]
    vec[..., 1] = model.shear_compliance * w.f[1]
    if q.any():
        vec = vec + gradient(green_potential(q, grid), grid).vectors
    if omega.any():
        vec = vec + gradient(green_potential(omega, grid), grid, rotated=True).vectors
    if noise_sigma > 0:
        if rng is None:
            raise ValueError("noise requires an explicit random generator")
        vec = vec + rng.normal(0.0, noise_sigma, vec.shape)
    return DisplacementField(grid, vec, None, frame_index, w.timestamp)


@dataclass(frozen=True)
class TriangleProfile:
    """Alternating quasi-static tilt sweep on one axis.

    ``tau(t) = peak * tri(cycles * (t - t0) / duration)`` with ``tri`` a unit
    triangle wave starting at 0 and rising first.
    """

    axis: str = "x"
    peak: float = 20.0
    frames: int = 200
    rate: float = 19.0
    cycles: float = 2.0
    grasp_fz: float = 5.0
    t0: float = 0.0
    shear: float = 0.0  # max random shear force per axis, N

    @property
    def duration(self):
        return self.frames / self.rate

    def torque_at(self, t):
        p = self.cycles * (np.asarray(t, float) - self.t0) / self.duration
        return self.peak * (1.0 - 4.0 * np.abs(np.mod(p + 0.25, 1.0) - 0.5))

    def wrench_at(self, t, shear=(0.0, 0.0)):
        tau = self.torque_at(t)
        tx, ty = (tau, 0.0) if self.axis == "x" else (0.0, tau)
        return AppliedWrench((shear[0], shear[1], self.grasp_fz), (float(tx), float(ty), 0.0),
                             float(t))

    def frame_times(self):
        return self.t0 + np.arange(self.frames) / self.rate

    def script(self, rng=None):
        """Per-frame wrenches. Random shear needs ``rng``."""
        times = self.frame_times()
        if self.shear > 0:
            if rng is None:
                raise ValueError("random shear requires an explicit random generator")
            shears = rng.uniform(-self.shear, self.shear, (len(times), 2))
        else:
            shears = np.zeros((len(times), 2))
        return [self.wrench_at(t, s) for t, s in zip(times, shears)]


@dataclass
class GraspSequence:
    frames: list
    truth: WrenchTimeSeries
    zero_index: int = 1

    @property
    def zero_frame(self):
        return self.frames[self.zero_index]


def grasp_sequence(script, patch, grid, noise_sigma=0.0, rng=None, model=DEFAULT_MODEL):
    """Pre-grasp frame, post-grasp zeroing frame, then the scripted load.

    The grasp frame carries only the first script sample's normal force.
    Ground truth holds one wrench sample per frame.
    """
    script = list(script)
    if not script:
        raise ValueError("empty load script")
    times = np.array([w.timestamp for w in script])
    if len(times) > 1 and not np.all(np.diff(times) > 0):
        raise NonMonotoneTime("script timestamps must be strictly increasing")
    dt = float(times[1] - times[0]) if len(times) > 1 else 1.0 / 19.0
    pre = AppliedWrench(timestamp=times[0] - 2 * dt)
    grasp = AppliedWrench((0.0, 0.0, script[0].f[2]), timestamp=times[0] - dt)
    wrenches = [pre, grasp] + script
    frames = [synth_field(w, patch, grid, noise_sigma, rng, model, frame_index=k)
              for k, w in enumerate(wrenches)]
    truth = WrenchTimeSeries([w.timestamp for w in wrenches],
                             np.array([w.as_array() for w in wrenches]),
                             1.0 / dt)
    return GraspSequence(frames, truth, 1)
