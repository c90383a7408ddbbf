"""Grayscale frame ingestion: PGM I/O, marker blobs, tracking, block flow.

Pixel coordinates are ``(x, y) = (column, row)``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import FormatError, SizeMismatch
from .field import DisplacementField, GridSpec


@dataclass(frozen=True, eq=False)
class GrayFrame:
    pixels: np.ndarray
    timestamp: float = 0.0
    index: int = 0

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise SizeMismatch(f"expected a 2D image, got shape {px.shape}")
        px = px.astype(np.uint8, copy=True)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def height(self):
        return self.pixels.shape[0]


_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*([^\s#]+)")


def parse_pgm(data: bytes, timestamp=0.0, index=0) -> GrayFrame:
    """Decode a binary (P5) PGM with maxval <= 255."""
    pos = 0
    tokens = []
    for _ in range(4):
        m = _PGM_TOKEN.match(data, pos)
        if not m:
            raise FormatError("truncated PGM header")
        tokens.append(m.group(1))
        pos = m.end()
    if tokens[0] != b"P5":
        raise FormatError(f"not a binary PGM (magic {tokens[0]!r})")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError("bad PGM header fields") from exc
    if not (0 < maxval < 256):
        raise FormatError(f"unsupported PGM maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    raw = data[pos:pos + w * h]
    if len(raw) != w * h:
        raise FormatError(f"PGM raster holds {len(raw)} bytes, expected {w * h}")
    px = np.frombuffer(raw, dtype=np.uint8).reshape(h, w)
    if maxval != 255:
        px = np.round(px.astype(float) * (255.0 / maxval)).astype(np.uint8)
    return GrayFrame(px, timestamp, index)


def read_pgm(path, timestamp=0.0, index=0) -> GrayFrame:
    with open(path, "rb") as fh:
        return parse_pgm(fh.read(), timestamp, index)


def encode_pgm(frame: GrayFrame) -> bytes:
    return b"P5\n%d %d\n255\n" % (frame.width, frame.height) + frame.pixels.tobytes()


def write_pgm(path, frame: GrayFrame):
    with open(path, "wb") as fh:
        fh.write(encode_pgm(frame))


def detect_blobs(frame: GrayFrame, threshold=128, min_area=4, max_area=400, dark=True):
    """Centroids of marker blobs as an ``(n, 2)`` array of (x, y).

    With ``dark=True`` markers are pixels strictly below ``threshold`` and
    each pixel is weighted by ``threshold - I``; with ``dark=False`` markers
    are pixels strictly above it, weighted by ``I - threshold``. Components
    (8-connected) outside ``[min_area, max_area]`` are discarded.
    """
    img = frame.pixels.astype(float)
    weight = (threshold - img) if dark else (img - threshold)
    mask = weight > 0
    labels, n = ndimage.label(mask, structure=np.ones((3, 3), bool))
    if n == 0:
        return np.zeros((0, 2))
    idx = np.arange(1, n + 1)
    area = ndimage.sum_labels(mask, labels, idx)
    keep = idx[(area >= min_area) & (area <= max_area)]
    if len(keep) == 0:
        return np.zeros((0, 2))
    w = np.where(mask, weight, 0.0)
    cy, cx = np.indices(img.shape, dtype=float)
    m = ndimage.sum_labels(w, labels, keep)
    sx = ndimage.sum_labels(w * cx, labels, keep)
    sy = ndimage.sum_labels(w * cy, labels, keep)
    return np.column_stack([sx / m, sy / m])


@dataclass
class MarkerTrack:
    id: int
    positions: list = field(default_factory=list)
    alive: bool = True

    @property
    def origin(self):
        return np.asarray(self.positions[0], float)

    @property
    def current(self):
        return np.asarray(self.positions[-1], float)

    @property
    def displacement(self):
        return self.current - self.origin


def start_tracks(detections, first_id=0):
    return [MarkerTrack(first_id + k, [tuple(map(float, p))]) for k, p in enumerate(detections)]


def track(tracks, detections, max_disp=5.0, ratio=0.8):
    """Advance live tracks by one frame of detections.

    A live track and a detection are linked when each is the other's nearest
    neighbour, the link is within ``max_disp``, and on both sides the nearest
    candidate beats the runner-up by the distance ratio ``ratio`` (ties and
    near-ties are ambiguous). Unlinked live tracks die; unlinked detections
    start new tracks. Dead tracks are carried along unchanged.
    """
    det = np.asarray(detections, float).reshape(-1, 2)
    live = [t for t in tracks if t.alive]
    next_id = max((t.id for t in tracks), default=-1) + 1
    out = {t.id: MarkerTrack(t.id, list(t.positions), t.alive) for t in tracks}

    matched_det = set()
    linked = set()
    if live and len(det):
        cur = np.array([t.current for t in live])
        d = np.linalg.norm(cur[:, None, :] - det[None, :, :], axis=-1)
        for i, t in enumerate(live):
            j = int(np.argmin(d[i]))
            if d[i, j] > max_disp or int(np.argmin(d[:, j])) != i:
                continue
            row = np.sort(d[i])
            col = np.sort(d[:, j])
            if len(row) > 1 and not row[0] < ratio * row[1]:
                continue
            if len(col) > 1 and not col[0] < ratio * col[1]:
                continue
            out[t.id].positions.append(tuple(map(float, det[j])))
            matched_det.add(j)
            linked.add(t.id)
    for t in live:
        if t.id not in linked:
            out[t.id].alive = False
    result = list(out.values())
    for j in range(len(det)):
        if j not in matched_det:
            result.append(MarkerTrack(next_id, [tuple(map(float, det[j]))]))
            next_id += 1
    return result


def tracks_to_markers(tracks, scale=1.0):
    """Origins and displacements of live tracks, scaled (e.g. mm per px)."""
    alive = [t for t in tracks if t.alive]
    if not alive:
        return np.zeros((0, 2)), np.zeros((0, 2))
    pos = np.array([t.origin for t in alive]) * scale
    disp = np.array([t.displacement for t in alive]) * scale
    return pos, disp


def _box_sums(a, block):
    """Sum of every ``block x block`` window; result[i, j] covers a[i:i+b, j:j+b]."""
    c = np.pad(np.cumsum(np.cumsum(a, axis=0), axis=1), ((1, 0), (1, 0)))
    b = block
    return c[b:, b:] - c[:-b, b:] - c[b:, :-b] + c[:-b, :-b]


def block_flow(ref: GrayFrame, cur: GrayFrame, block=9, search=4, stride=4,
               min_curvature=1.0) -> DisplacementField:
    """Dense-ish flow by SSD block matching with parabolic sub-pixel refinement.

    Nodes sit every ``stride`` pixels wherever a ``block`` window plus the
    ``search`` margin fits inside the frame. A node is invalid when its best
    offset lies on the search border or when the SSD curvature per pixel
    (along either axis) is below ``min_curvature``. The returned field is in
    pixels with grid pitch ``stride``.
    """
    if ref.pixels.shape != cur.pixels.shape:
        raise SizeMismatch(f"frame sizes differ: {ref.pixels.shape} vs {cur.pixels.shape}")
    H, W = ref.pixels.shape
    s, b = int(search), int(block)
    if b + 2 * s > min(H, W):
        raise SizeMismatch("block plus search window does not fit in the frame")
    a = ref.pixels.astype(float)
    c = cur.pixels.astype(float)

    # top-left corners of the reference blocks
    ys = np.arange(s, H - s - b + 1, stride)
    xs = np.arange(s, W - s - b + 1, stride)
    ny, nx = len(ys), len(xs)
    if nx < 2 or ny < 2:
        raise SizeMismatch("frame too small for a 2x2 flow grid")

    n_off = 2 * s + 1
    ssd = np.empty((n_off, n_off, ny, nx))
    inner = a[s:H - s, s:W - s]
    for iy, dy in enumerate(range(-s, s + 1)):
        for ix, dx in enumerate(range(-s, s + 1)):
            diff = c[s + dy:H - s + dy, s + dx:W - s + dx] - inner
            sums = _box_sums(diff * diff, b)
            ssd[iy, ix] = sums[np.ix_(ys - s, xs - s)]

    flat = ssd.reshape(n_off * n_off, ny, nx)
    best = np.argmin(flat, axis=0)
    by, bx = np.divmod(best, n_off)
    on_border = (by == 0) | (by == n_off - 1) | (bx == 0) | (bx == n_off - 1)
    byc = np.clip(by, 1, n_off - 2)
    bxc = np.clip(bx, 1, n_off - 2)
    jj, ii = np.meshgrid(np.arange(nx), np.arange(ny))
    s0 = ssd[byc, bxc, ii, jj]
    sxm = ssd[byc, bxc - 1, ii, jj]
    sxp = ssd[byc, bxc + 1, ii, jj]
    sym = ssd[byc - 1, bxc, ii, jj]
    syp = ssd[byc + 1, bxc, ii, jj]
    curv_x = sxm - 2 * s0 + sxp
    curv_y = sym - 2 * s0 + syp
    npx = float(b * b)
    textured = (curv_x / npx >= min_curvature) & (curv_y / npx >= min_curvature)
    valid = ~on_border & textured
    # an exact (zero-SSD) match is already the minimum; no sub-pixel shift
    refine = valid & (s0 > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        fx = np.where(refine, 0.5 * (sxm - sxp) / curv_x, 0.0)
        fy = np.where(refine, 0.5 * (sym - syp) / curv_y, 0.0)
    u = (bxc - s) + fx
    v = (byc - s) + fy
    half = 0.5 * (b - 1)
    grid = GridSpec(nx, ny, float(stride), (xs[0] + half, ys[0] + half))
    return DisplacementField(grid, np.stack([u, v], axis=-1), valid, cur.index, cur.timestamp)
