"""Grid-based displacement fields and discrete differential operators.

Array convention: node arrays are shaped ``(height, width)``; axis 0 is y
(rows), axis 1 is x (columns). Node ``(ix, iy)`` lives at
``origin + pitch * (ix, iy)``.

Derivative stencil, chosen per node and per axis from the validity mask:

* five-point central difference when both neighbours on each side are valid,
* three-point central difference when only the nearest pair is valid,
* one-sided difference when exactly one neighbour is valid,
* otherwise the node gets no derivative and drops out of the output mask.

On a fully valid grid the stencil choice along x depends only on ``ix`` (and
along y only on ``iy``), so the x and y difference operators commute and
``curl(gradient(phi))`` and ``divergence(rotated gradient)`` vanish to
round-off.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateField, EmptyInput, GridMismatch, MaskViolation, OutOfBounds


@dataclass(frozen=True)
class GridSpec:
    width: int
    height: int
    pitch: float = 1.0
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if int(self.width) != self.width or int(self.height) != self.height:
            raise ValueError("grid dimensions must be integers")
        if self.width < 2 or self.height < 2:
            raise ValueError(f"grid must be at least 2x2, got {self.width}x{self.height}")
        if not (self.pitch > 0 and np.isfinite(self.pitch)):
            raise ValueError(f"pitch must be positive, got {self.pitch}")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "pitch", float(self.pitch))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def centered(cls, width, height, pitch=1.0):
        """Grid whose geometric centre sits at (0, 0)."""
        ox = -0.5 * (width - 1) * pitch
        oy = -0.5 * (height - 1) * pitch
        return cls(width, height, pitch, (ox, oy))

    @property
    def shape(self):
        return (self.height, self.width)

    @property
    def size(self):
        return self.width * self.height

    @property
    def xs(self):
        return self.origin[0] + self.pitch * np.arange(self.width)

    @property
    def ys(self):
        return self.origin[1] + self.pitch * np.arange(self.height)

    def coords(self):
        """Node coordinates as two ``(height, width)`` arrays (X, Y)."""
        return np.meshgrid(self.xs, self.ys)

    @property
    def center(self):
        """Geometric centre of the full grid."""
        return np.array([
            self.origin[0] + 0.5 * (self.width - 1) * self.pitch,
            self.origin[1] + 0.5 * (self.height - 1) * self.pitch,
        ])

    @property
    def bounds(self):
        """(xmin, xmax, ymin, ymax) of the node lattice."""
        x0, y0 = self.origin
        return (x0, x0 + (self.width - 1) * self.pitch, y0, y0 + (self.height - 1) * self.pitch)

    def contains(self, x, y, tol=1e-9):
        xmin, xmax, ymin, ymax = self.bounds
        t = tol * self.pitch
        x = np.asarray(x)
        y = np.asarray(y)
        return (x >= xmin - t) & (x <= xmax + t) & (y >= ymin - t) & (y <= ymax + t)


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DisplacementField:
    """Per-node 2D displacement with a validity mask.

    ``vectors`` has shape ``(height, width, 2)`` holding (u, v). Values on
    invalid nodes are stored as zero.
    """

    grid: GridSpec
    vectors: np.ndarray
    valid: np.ndarray = None
    frame_index: int = 0
    timestamp: float = 0.0

    def __post_init__(self):
        vec = np.asarray(self.vectors, dtype=float)
        if vec.shape == (self.grid.size, 2):
            vec = vec.reshape(self.grid.height, self.grid.width, 2)
        if vec.shape != (self.grid.height, self.grid.width, 2):
            raise ValueError(f"vectors shape {vec.shape} does not match grid {self.grid.shape}")
        if self.valid is None:
            valid = np.ones(self.grid.shape, dtype=bool)
        else:
            valid = np.asarray(self.valid, dtype=bool).reshape(self.grid.shape)
        if not np.isfinite(vec[valid]).all():
            raise ValueError("non-finite displacement on a valid node")
        vec = np.where(valid[..., None], vec, 0.0)
        object.__setattr__(self, "vectors", _frozen(vec))
        object.__setattr__(self, "valid", _frozen(valid))

    @classmethod
    def zeros(cls, grid, **kw):
        return cls(grid, np.zeros(grid.shape + (2,)), **kw)

    @classmethod
    def from_function(cls, grid, fn, **kw):
        """Sample ``fn(X, Y) -> (U, V)`` at the node coordinates."""
        X, Y = grid.coords()
        U, V = fn(X, Y)
        vec = np.stack(np.broadcast_arrays(np.asarray(U, float), np.asarray(V, float)), axis=-1)
        return cls(grid, vec, **kw)

    @property
    def u(self):
        return self.vectors[..., 0]

    @property
    def v(self):
        return self.vectors[..., 1]

    @property
    def n_valid(self):
        return int(self.valid.sum())

    def norm(self):
        """Euclidean norm over valid nodes."""
        return float(np.sqrt(np.sum(self.vectors[self.valid] ** 2)))

    def replace(self, vectors=None, valid=None, **kw):
        return DisplacementField(
            self.grid,
            self.vectors if vectors is None else vectors,
            self.valid if valid is None else valid,
            kw.get("frame_index", self.frame_index),
            kw.get("timestamp", self.timestamp),
        )

    def _check(self, other):
        if self.grid != other.grid:
            raise GridMismatch(f"{self.grid} vs {other.grid}")

    def __add__(self, other):
        if isinstance(other, DisplacementField):
            self._check(other)
            return self.replace(self.vectors + other.vectors, self.valid & other.valid)
        return self.replace(self.vectors + np.asarray(other, float))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, DisplacementField):
            self._check(other)
            return self.replace(self.vectors - other.vectors, self.valid & other.valid)
        return self.replace(self.vectors - np.asarray(other, float))

    def __mul__(self, k):
        return self.replace(self.vectors * float(k))

    __rmul__ = __mul__

    def __neg__(self):
        return self.replace(-self.vectors)


@dataclass(frozen=True, eq=False)
class DivergenceMap:
    """Scalar per-node map (divergence or curl). Invalid nodes hold 0."""

    grid: GridSpec
    rho: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        valid = np.asarray(self.valid, dtype=bool).reshape(self.grid.shape)
        rho = np.asarray(self.rho, dtype=float).reshape(self.grid.shape)
        if not np.isfinite(rho[valid]).all():
            raise ValueError("non-finite value on a valid node")
        object.__setattr__(self, "rho", _frozen(np.where(valid, rho, 0.0)))
        object.__setattr__(self, "valid", _frozen(valid))

    @property
    def rho_plus(self):
        return np.where(self.rho > 0, self.rho, 0.0)

    @property
    def rho_minus(self):
        return np.where(self.rho < 0, self.rho, 0.0)

    @property
    def n_valid(self):
        return int(self.valid.sum())

    def interior_rms(self, margin=2):
        """RMS over valid nodes at least ``margin`` nodes from the grid edge."""
        inner = np.zeros(self.grid.shape, dtype=bool)
        inner[margin:self.grid.height - margin, margin:self.grid.width - margin] = True
        sel = inner & self.valid
        if not sel.any():
            return 0.0
        return float(np.sqrt(np.mean(self.rho[sel] ** 2)))


@dataclass(frozen=True)
class ZeroReference:
    reference: DisplacementField
    established_at: int = 0

    @classmethod
    def capture(cls, field):
        return cls(field, field.frame_index)


def _neighbor(a, k, axis, fill):
    """Value of ``a`` at offset ``k`` along ``axis`` (``fill`` off-grid)."""
    n = a.shape[axis]
    out = np.full_like(a, fill)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if k > 0:
        src[axis] = slice(k, n)
        dst[axis] = slice(0, n - k)
    else:
        src[axis] = slice(0, n + k)
        dst[axis] = slice(-k, n)
    out[tuple(dst)] = a[tuple(src)]
    return out


def partial_derivative(f, valid, pitch, axis):
    """Masked first derivative of a node scalar along ``axis``.

    Returns ``(d, ok)`` where ``ok`` marks nodes that received a derivative.
    """
    f = np.where(valid, f, 0.0)
    vm1 = _neighbor(valid, -1, axis, False)
    vp1 = _neighbor(valid, 1, axis, False)
    vm2 = _neighbor(valid, -2, axis, False)
    vp2 = _neighbor(valid, 2, axis, False)
    fm1 = _neighbor(f, -1, axis, 0.0)
    fp1 = _neighbor(f, 1, axis, 0.0)
    fm2 = _neighbor(f, -2, axis, 0.0)
    fp2 = _neighbor(f, 2, axis, 0.0)

    c4 = valid & vm1 & vp1 & vm2 & vp2
    c2 = valid & vm1 & vp1 & ~c4
    fw = valid & vp1 & ~vm1
    bw = valid & vm1 & ~vp1

    d = np.zeros_like(f)
    # grouped as differences so a constant field differentiates to exactly 0
    d[c4] = ((8.0 * (fp1 - fm1) - (fp2 - fm2))[c4]) / (12.0 * pitch)
    d[c2] = ((fp1 - fm1)[c2]) / (2.0 * pitch)
    d[fw] = ((fp1 - f)[fw]) / pitch
    d[bw] = ((f - fm1)[bw]) / pitch
    return d, c4 | c2 | fw | bw


def divergence(field: DisplacementField) -> DivergenceMap:
    """Discrete du/dx + dv/dy."""
    h = field.grid.pitch
    du, okx = partial_derivative(field.u, field.valid, h, axis=1)
    dv, oky = partial_derivative(field.v, field.valid, h, axis=0)
    ok = okx & oky
    if not ok.any():
        raise DegenerateField("no node has stencil support on both axes")
    return DivergenceMap(field.grid, np.where(ok, du + dv, 0.0), ok)


def curl(field: DisplacementField) -> DivergenceMap:
    """Discrete dv/dx - du/dy, same stencil policy as :func:`divergence`."""
    h = field.grid.pitch
    dv, okx = partial_derivative(field.v, field.valid, h, axis=1)
    du, oky = partial_derivative(field.u, field.valid, h, axis=0)
    ok = okx & oky
    if not ok.any():
        raise DegenerateField("no node has stencil support on both axes")
    return DivergenceMap(field.grid, np.where(ok, dv - du, 0.0), ok)


def gradient(phi, grid: GridSpec, valid=None, rotated=False) -> DisplacementField:
    """Gradient of a node scalar as a displacement field.

    With ``rotated=True`` returns the 90-degree rotated gradient
    ``(-dphi/dy, dphi/dx)``, whose curl is the Laplacian of ``phi``.
    """
    phi = np.asarray(phi, dtype=float).reshape(grid.shape)
    valid = np.ones(grid.shape, bool) if valid is None else np.asarray(valid, bool)
    gx, okx = partial_derivative(phi, valid, grid.pitch, axis=1)
    gy, oky = partial_derivative(phi, valid, grid.pitch, axis=0)
    vec = np.stack([-gy, gx] if rotated else [gx, gy], axis=-1)
    return DisplacementField(grid, vec, okx & oky)


def rasterize(positions, displacements, grid: GridSpec, radius=1.0, power=2.0,
              frame_index=0, timestamp=0.0) -> DisplacementField:
    """Inverse-distance-weighted gridding of scattered marker displacements.

    Every node averages the markers strictly closer than ``radius * pitch``
    with weights ``1 / d**power``. A marker sitting on a node (to 1e-12 pitch)
    takes precedence and that node reads the marker value exactly. Nodes with
    no marker in range are invalid. Markers outside the grid are skipped with
    an :class:`OutOfBounds` warning.
    """
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    disp = np.asarray(displacements, dtype=float).reshape(-1, 2)
    if len(pos) == 0:
        raise EmptyInput("no markers to rasterize")
    if len(pos) != len(disp):
        raise ValueError("positions and displacements differ in length")

    inside = grid.contains(pos[:, 0], pos[:, 1]) & np.isfinite(disp).all(axis=1)
    if not inside.all():
        warnings.warn(f"{int((~inside).sum())} marker(s) outside the grid skipped", OutOfBounds,
                      stacklevel=2)
        pos, disp = pos[inside], disp[inside]
    if len(pos) == 0:
        raise EmptyInput("all markers lie outside the grid")

    X, Y = grid.coords()
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    r = radius * grid.pitch
    pairs = cKDTree(nodes).sparse_distance_matrix(cKDTree(pos), r, output_type="ndarray")
    ni = pairs["i"].astype(np.intp)
    mj = pairs["j"].astype(np.intp)
    d = pairs["v"]
    keep = d < r
    ni, mj, d = ni[keep], mj[keep], d[keep]

    hit = d <= 1e-12 * grid.pitch
    exact = np.zeros(grid.size, dtype=bool)
    exact[ni[hit]] = True
    w = np.zeros_like(d)
    w[hit] = 1.0
    soft = ~exact[ni]
    w[soft] = d[soft] ** -power

    wsum = np.bincount(ni, weights=w, minlength=grid.size)
    su = np.bincount(ni, weights=w * disp[mj, 0], minlength=grid.size)
    sv = np.bincount(ni, weights=w * disp[mj, 1], minlength=grid.size)
    valid = wsum > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        vec = np.column_stack([np.where(valid, su / wsum, 0.0), np.where(valid, sv / wsum, 0.0)])
    return DisplacementField(grid, vec, valid, frame_index, timestamp)


def zero(current: DisplacementField, ref: ZeroReference) -> DisplacementField:
    """Subtract the post-grasp reference field node-wise."""
    base = ref.reference
    if current.grid != base.grid:
        raise GridMismatch(f"frame grid {current.grid} != reference grid {base.grid}")
    uncovered = current.valid & ~base.valid
    if uncovered.any():
        warnings.warn(f"{int(uncovered.sum())} valid node(s) not covered by the zero reference",
                      MaskViolation, stacklevel=2)
    return DisplacementField(current.grid, current.vectors - base.vectors,
                             current.valid & base.valid, current.frame_index, current.timestamp)
