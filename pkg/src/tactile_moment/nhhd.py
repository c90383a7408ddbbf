"""Natural Helmholtz-Hodge decomposition on a node grid.

The scalar and stream potentials are free-space (open boundary) Green's
function sums of the discrete divergence and curl,

    D(x_i) = sum_j G(x_i - x_j) * rho_j * pitch**2,   G(r) = ln|r| / (2 pi),

evaluated by direct summation. The diverging part is the discrete gradient
of ``D``, the rotational part the rotated gradient of the stream potential,
and whatever is left over is the harmonic part.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import ndimage
from scipy.signal import convolve2d

from .errors import DegenerateField
from .field import DisplacementField, GridSpec, curl, divergence, gradient

# mean of ln|r| over the unit square centred on the origin
_LOG_CELL_MEAN = 0.5 * (np.pi / 2.0 - 3.0 - np.log(2.0))


def green_self_term(pitch):
    """Integral of ln|r|/(2 pi) over one square cell of side ``pitch``."""
    return pitch * pitch * (np.log(pitch) + _LOG_CELL_MEAN) / (2.0 * np.pi)


@lru_cache(maxsize=16)
def _kernel(height, width, pitch):
    dy = pitch * np.arange(-(height - 1), height)
    dx = pitch * np.arange(-(width - 1), width)
    DX, DY = np.meshgrid(dx, dy)
    r = np.hypot(DX, DY)
    r[height - 1, width - 1] = 1.0
    K = np.log(r) * (pitch * pitch / (2.0 * np.pi))
    K[height - 1, width - 1] = green_self_term(pitch)
    K.setflags(write=False)
    return K


def green_potential(q, grid: GridSpec):
    """Open-boundary potential of node charges ``q`` by direct summation."""
    q = np.asarray(q, dtype=float).reshape(grid.shape)
    K = _kernel(grid.height, grid.width, grid.pitch)
    return convolve2d(q, K, mode="valid")


@dataclass(frozen=True, eq=False)
class FieldDecomposition:
    diverging: DisplacementField
    rotational: DisplacementField
    harmonic: DisplacementField
    source: DisplacementField
    scalar_potential: np.ndarray = None
    stream_potential: np.ndarray = None

    def reconstruction_error(self):
        """Relative norm of ``diverging + rotational + harmonic - source``."""
        total = self.diverging + self.rotational + self.harmonic
        ref = self.source.norm()
        err = (total - self.source).norm()
        return err / ref if ref > 0 else err


def _check_support(valid):
    interior = ndimage.binary_erosion(valid, np.ones((3, 3), bool))
    core = ndimage.binary_erosion(interior, np.ones((3, 3), bool))
    if not core.any():
        raise DegenerateField("decomposition needs at least a 3x3 valid interior")


def decompose(field: DisplacementField) -> FieldDecomposition:
    """Split ``field`` into diverging, rotational and harmonic parts.

    All three parts share the source's validity mask and sum back to the
    source node-wise.
    """
    _check_support(field.valid)
    grid = field.grid
    rho = divergence(field)
    omega = curl(field)
    D = green_potential(rho.rho, grid)
    R = green_potential(omega.rho, grid)
    mask = field.valid
    div_part = gradient(D, grid).replace(valid=mask)
    rot_part = gradient(R, grid, rotated=True).replace(valid=mask)
    harm = DisplacementField(grid, field.vectors - div_part.vectors - rot_part.vectors, mask,
                             field.frame_index, field.timestamp)
    keep = dict(frame_index=field.frame_index, timestamp=field.timestamp)
    return FieldDecomposition(div_part.replace(**keep), rot_part.replace(**keep), harm, field, D, R)
