"""Command-line front end.

Exit codes: 0 success, 1 input or usage error, 2 internal failure.
``TACTILE_MOMENT_THREADS`` caps the worker threads used for per-frame work.
"""
from __future__ import annotations

import argparse
import glob
import json
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__  # noqa: F401
from .calibration import AXES, CalibrationModel, evaluate, fit, resample, WrenchTimeSeries
from .errors import InvariantError, TactileError
from .field import DisplacementField, GridSpec, rasterize
from .ingest import block_flow, detect_blobs, read_pgm, start_tracks, track, tracks_to_markers
from .io import (FIELD_HEADER, read_estimates_csv, read_field_csv, read_index,
                 read_wrench_csv, write_estimates_csv, write_field_csv, write_index,
                 write_wrench_csv)
from .nhhd import decompose
from .pipeline import METHODS, TactilePipeline
from .simulator import (ContactPatch, TriangleProfile, grasp_sequence, round_peg, square_peg)

THREADS_ENV = "TACTILE_MOMENT_THREADS"


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _threads():
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return min(4, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise InputError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def _map(fn, items):
    """Order-preserving parallel map."""
    items = list(items)
    n = _threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _kv(spec, what):
    """Parse ``kind:k=v,k=v`` into ``(kind, {k: v})``."""
    kind, _, rest = spec.partition(":")
    opts = {}
    for item in filter(None, rest.split(",")):
        k, eq, v = item.partition("=")
        if not eq:
            raise InputError(f"bad {what} option {item!r} (expected key=value)")
        opts[k.strip()] = v.strip()
    return kind.strip(), opts


def _num(opts, key, default, what, cast=float):
    if key not in opts:
        return default
    try:
        return cast(opts.pop(key))
    except ValueError:
        raise InputError(f"{what} option {key} is not a number") from None


def _no_extra(opts, what):
    if opts:
        raise InputError(f"unknown {what} option(s): {', '.join(sorted(opts))}")


def parse_grid(text):
    try:
        w, h = (int(a) for a in text.lower().split("x"))
    except ValueError:
        raise InputError(f"grid must look like 32x32, got {text!r}") from None
    return w, h


def parse_patch(spec, grid):
    kind, o = _kv(spec, "patch")
    center = None
    if "x" in o or "y" in o:
        c = grid.center
        center = (_num(o, "x", c[0], "patch"), _num(o, "y", c[1], "patch"))
    if kind == "disc":
        p = ContactPatch.disc(_num(o, "r", 6.0, "patch"), center)
    elif kind == "rect":
        p = ContactPatch.rect(_num(o, "w", 10.0, "patch"), _num(o, "h", 10.0, "patch"), center)
    elif kind in ("square", "round"):
        axis = o.pop("axis", "x")
        if axis not in AXES:
            raise InputError(f"peg axis must be x or y, got {axis!r}")
        length = _num(o, "length", None, "patch")
        if kind == "square":
            p = square_peg(grid, _num(o, "width", 10.0, "patch"), length, axis)
        else:
            p = round_peg(grid, _num(o, "diameter", 10.0, "patch"), length, axis,
                          _num(o, "fraction", 0.6, "patch"))
    else:
        raise InputError(f"unknown patch kind {kind!r} (disc, rect, square, round)")
    _no_extra(o, "patch")
    p.node_mask(grid)
    return p


def parse_profile(spec):
    kind, o = _kv(spec, "profile")
    if kind != "triangle":
        raise InputError(f"unknown profile {kind!r} (only triangle)")
    axis = o.pop("axis", "x")
    if axis not in AXES:
        raise InputError(f"profile axis must be x or y, got {axis!r}")
    prof = TriangleProfile(
        axis=axis,
        peak=_num(o, "peak", 20.0, "profile"),
        frames=_num(o, "frames", 200, "profile", int),
        rate=_num(o, "rate", 19.0, "profile"),
        cycles=_num(o, "cycles", 2.0, "profile"),
        grasp_fz=_num(o, "fz", 5.0, "profile"),
        shear=_num(o, "shear", 0.0, "profile"),
    )
    _no_extra(o, "profile")
    if prof.frames < 2 or prof.rate <= 0:
        raise InputError("profile needs frames >= 2 and rate > 0")
    return prof


def ft_truth(prof, seq, ft_rate):
    """Force/torque sensor record at ``ft_rate`` over the scripted span.

    Tilt torque comes straight from the profile; forces are interpolated
    from the per-frame script.
    """
    ft = seq.truth.times[seq.zero_index + 1:]
    w = seq.truth.wrench[seq.zero_index + 1:]
    t = ft[0] + np.arange(int(np.floor((ft[-1] - ft[0]) * ft_rate + 1e-9)) + 1) / ft_rate
    out = np.empty((len(t), 6))
    for k in range(3):
        out[:, k] = np.interp(t, ft, w[:, k])
    tau = prof.torque_at(t)
    out[:, 3] = tau if prof.axis == "x" else 0.0
    out[:, 4] = tau if prof.axis == "y" else 0.0
    out[:, 5] = np.interp(t, ft, w[:, 5])
    return WrenchTimeSeries(t, out, ft_rate)


def _frame_name(k):
    return f"frame_{k:04d}.csv"


def write_frames(out, fields):
    os.makedirs(out, exist_ok=True)
    entries = []
    for k, f in enumerate(fields):
        name = _frame_name(k)
        write_field_csv(os.path.join(out, name), f)
        entries.append((f.frame_index, f.timestamp, name))
    write_index(out, entries)


def cmd_simulate(a):
    grid = GridSpec.centered(*parse_grid(a.grid), a.pitch)
    patch = parse_patch(a.patch, grid)
    prof = parse_profile(a.profile)
    if a.noise < 0 or a.ft_rate <= 0:
        raise InputError("noise must be >= 0 and ft-rate > 0")
    rng = np.random.default_rng(a.seed)
    seq = grasp_sequence(prof.script(rng), patch, grid, a.noise, rng)
    write_frames(a.out, seq.frames)
    write_wrench_csv(os.path.join(a.out, "truth.csv"), ft_truth(prof, seq, a.ft_rate))
    write_wrench_csv(os.path.join(a.out, "frame_truth.csv"), seq.truth)
    print(f"wrote {len(seq.frames)} frames to {a.out}; "
          f"zero reference {_frame_name(seq.zero_index)}")


def _is_field_csv(path):
    with open(path) as fh:
        return fh.readline().strip() == ",".join(FIELD_HEADER)


def collect_frames(inputs):
    """Expand files and directories into ``(path, index, t)`` in order."""
    out = []
    for item in inputs:
        if os.path.isdir(item):
            index = read_index(item)
            if index:
                for name, (i, t) in sorted(index.items(), key=lambda kv: kv[1][0]):
                    out.append((os.path.join(item, name), i, t))
            else:
                for p in sorted(glob.glob(os.path.join(item, "*.csv"))):
                    if _is_field_csv(p):
                        out.append((p, None, None))
        elif os.path.isfile(item):
            i, t = read_index(os.path.dirname(item) or ".").get(os.path.basename(item),
                                                                (None, None))
            out.append((item, i, t))
        else:
            raise InputError(f"no such file or directory: {item}")
    return [(p, k if i is None else i, float(k if t is None else t))
            for k, (p, i, t) in enumerate(out)]


def _open_out(path):
    return open(path, "w", newline="") if path else sys.stdout


def cmd_estimate(a):
    frames = collect_frames(a.inputs)
    if not frames:
        raise InputError("no input frames")
    cal = CalibrationModel.load(a.cal) if a.cal else None
    if cal is not None and cal.method != a.method:
        raise InputError(f"calibration was fitted for method {cal.method!r}, not {a.method!r}")
    pipe = TactilePipeline(cal, a.method)
    pipe.rezero(read_field_csv(a.ref))
    rows = _map(lambda f: pipe.process(read_field_csv(f[0], f[1], f[2])), frames)
    fh = _open_out(a.out)
    try:
        write_estimates_csv(fh, rows)
    finally:
        if fh is not sys.stdout:
            fh.close()


def cmd_decompose(a):
    field = read_field_csv(a.field)
    dec = decompose(field)
    prefix = a.out_prefix or (a.field[:-4] if a.field.endswith(".csv") else a.field)
    for suffix, part in (("div", dec.diverging), ("rot", dec.rotational), ("harm", dec.harmonic)):
        write_field_csv(f"{prefix}.{suffix}.csv", part)
    print(json.dumps({
        "source_norm": field.norm(),
        "div_norm": dec.diverging.norm(),
        "rot_norm": dec.rotational.norm(),
        "harm_norm": dec.harmonic.norm(),
        "reconstruction_error": dec.reconstruction_error(),
    }, indent=2))


def _pairs(truth_paths, est_paths):
    """Per-axis ``(raw, truth)`` pairs pooled over datasets.

    A dataset contributes to an axis only if its truth excites that axis.
    """
    if len(truth_paths) != len(est_paths):
        raise InputError("give one --truth per --est")
    raw = {a: [] for a in AXES}
    tru = {a: [] for a in AXES}
    method, dropped, names = None, 0, []
    for tp, ep in zip(truth_paths, est_paths):
        t, p, m = read_estimates_csv(ep)
        if method not in (None, m):
            raise InputError("estimate files mix estimator methods")
        method = m
        series, kept, n_drop = resample(read_wrench_csv(tp), t)
        dropped += n_drop
        names.append(f"{os.path.basename(ep)}~{os.path.basename(tp)}")
        r = {"x": p[kept, 1], "y": -p[kept, 0]}
        for axis in AXES:
            tr = series.column(f"t{axis}")
            if np.any(tr != 0):
                raw[axis].append(r[axis])
                tru[axis].append(tr)
    pairs = {a: (np.concatenate(raw[a]), np.concatenate(tru[a])) for a in AXES if raw[a]}
    if not pairs:
        raise InputError("no dataset excites a tilt axis (truth tx and ty are all zero)")
    return pairs, method, dropped, ";".join(names)


def cmd_calibrate(a):
    pairs, method, dropped, names = _pairs(a.truth, a.est)
    cal = fit(pairs, a.intercept, method, names)
    cal.save(a.out)
    if dropped:
        print(f"note: {dropped} estimate samples outside the truth time range were dropped",
              file=sys.stderr)
    print(cal.to_json())


def cmd_evaluate(a):
    cal = CalibrationModel.load(a.cal)
    pairs, method, dropped, _ = _pairs(a.truth, a.est)
    if method != cal.method:
        raise InputError(f"calibration is for {cal.method!r} but estimates are {method!r}")
    rep = evaluate(cal, pairs, method)
    if a.scatter:
        rep.write_scatter(a.scatter)
    text = json.dumps(rep.to_dict(), indent=2, sort_keys=True)
    if a.out:
        with open(a.out, "w") as fh:
            fh.write(text + "\n")
    print(text)


def _scaled(field: DisplacementField, scale):
    g = field.grid
    grid = GridSpec(g.width, g.height, g.pitch * scale, (g.origin[0] * scale, g.origin[1] * scale))
    return DisplacementField(grid, field.vectors * scale, field.valid, field.frame_index,
                             field.timestamp)


def _read_frames(paths, rate):
    if not paths:
        raise InputError("no input frames")
    return _map(lambda kp: read_pgm(kp[1], kp[0] / rate, kp[0]), list(enumerate(paths)))


def cmd_flow(a):
    frames = _read_frames(a.frames, a.rate)
    ref = read_pgm(a.ref) if a.ref else frames[0]
    fields = _map(lambda f: _scaled(block_flow(ref, f, a.block, a.search, a.stride,
                                               a.min_curvature), a.scale), frames)
    write_frames(a.out, fields)
    print(f"wrote {len(fields)} flow fields to {a.out}")


def cmd_track(a):
    frames = _read_frames(a.frames, a.rate)
    f0 = frames[0]
    pitch = a.pitch
    w = a.grid_w or max(2, int(f0.width // pitch))
    h = a.grid_h or max(2, int(f0.height // pitch))
    grid = GridSpec(w, h, pitch, (0.5 * pitch, 0.5 * pitch))
    detect = lambda f: detect_blobs(f, a.threshold, a.min_area, a.max_area, not a.bright)
    dets = _map(detect, frames)
    tracks = start_tracks(dets[0])
    fields = []
    for f, d in zip(frames, dets):
        if f is not f0:
            tracks = track(tracks, d, a.max_disp, a.ratio)
        pos, disp = tracks_to_markers(tracks)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            field = rasterize(pos, disp, grid, a.radius, frame_index=f.index, timestamp=f.timestamp)
        fields.append(_scaled(field, a.scale))
    write_frames(a.out, fields)
    alive = sum(t.alive for t in tracks)
    print(f"wrote {len(fields)} fields to {a.out}; {alive} of {len(dets[0])} tracks alive")


def cmd_rezero_demo(a):
    grid = GridSpec.centered(*parse_grid(a.grid), a.pitch)
    patch = parse_patch(a.patch, grid)
    prof = TriangleProfile(axis=a.axis, peak=a.peak, frames=a.frames, rate=a.rate,
                           grasp_fz=a.fz)
    rng = np.random.default_rng(a.seed)
    seq = grasp_sequence(prof.script(), patch, grid, a.noise, rng)
    body = seq.frames[seq.zero_index + 1:]
    truth = seq.truth.wrench[seq.zero_index + 1:, 3 if a.axis == "x" else 4]

    def run(ref_frame, cal=None):
        pipe = TactilePipeline(cal)
        pipe.rezero(ref_frame)
        rows = [pipe.process(f) for f in body]
        return rows, np.array([r.raw[0 if a.axis == "x" else 1] for r in rows])

    rows_z, raw_z = run(seq.zero_frame)
    cal = fit({a.axis: (raw_z, truth)}, created_from="rezero-demo")
    rows_z, _ = run(seq.zero_frame, cal)
    rows_u, _ = run(seq.frames[0], cal)
    k = 0 if a.axis == "x" else 1
    err = lambda rows: float(np.sqrt(np.mean(
        (np.array([(r.tau_x, r.tau_y)[k] for r in rows]) - truth) ** 2)))
    out = {"axis": a.axis, "fz": a.fz, "peak": a.peak, "seed": a.seed,
           "rmse_zeroed": err(rows_z), "rmse_unzeroed": err(rows_u)}
    out["ratio"] = out["rmse_unzeroed"] / out["rmse_zeroed"]
    if a.out:
        os.makedirs(a.out, exist_ok=True)
        for name, rows in (("est_zeroed.csv", rows_z), ("est_unzeroed.csv", rows_u)):
            with open(os.path.join(a.out, name), "w", newline="") as fh:
                write_estimates_csv(fh, rows)
        with open(os.path.join(a.out, "summary.json"), "w") as fh:
            fh.write(json.dumps(out, indent=2, sort_keys=True) + "\n")
    print(json.dumps(out, indent=2, sort_keys=True))


def build_parser():
    p = _Parser(prog="tactile-moment", description="Tilt torque from tactile displacement fields.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("simulate", help="synthesize a grasp-and-tilt frame sequence")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--patch", default="disc:r=6",
                   help="disc:r=R | rect:w=W,h=H | square:width=W,axis=x | round:diameter=D,axis=x "
                        "(optional x=,y= centre for disc/rect)")
    s.add_argument("--profile", default="triangle:axis=x,peak=20,frames=200,rate=19",
                   help="triangle:axis=,peak=,frames=,rate=,cycles=,fz=,shear=")
    s.add_argument("--noise", type=float, default=0.02, help="displacement noise sigma, mm")
    s.add_argument("--grid", default="32x32")
    s.add_argument("--pitch", type=float, default=0.6, help="node spacing, mm")
    s.add_argument("--ft-rate", type=float, default=62.5, help="truth.csv sample rate, Hz")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("estimate", help="tilt torque for field CSVs")
    s.add_argument("--ref", required=True, help="zero-reference field CSV")
    s.add_argument("--cal", help="calibration JSON (identity if omitted)")
    s.add_argument("--method", choices=METHODS, default="dipole")
    s.add_argument("--out", help="output CSV (stdout if omitted)")
    s.add_argument("inputs", nargs="*", help="field CSVs or directories")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("decompose", help="split a field into diverging, rotational, harmonic parts")
    s.add_argument("field")
    s.add_argument("--out-prefix")
    s.set_defaults(func=cmd_decompose)

    for name, func, helptext in (("calibrate", cmd_calibrate, "fit calibration factors"),
                                 ("evaluate", cmd_evaluate, "score a calibration")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--truth", action="append", required=True, help="wrench CSV (repeatable)")
        s.add_argument("--est", action="append", required=True, help="estimate CSV (repeatable)")
        if name == "calibrate":
            s.add_argument("--out", required=True, help="calibration JSON")
            s.add_argument("--intercept", action="store_true", help="fit an offset per axis")
        else:
            s.add_argument("--cal", required=True)
            s.add_argument("--scatter", help="scatter CSV for plotting")
            s.add_argument("--out", help="report JSON")
        s.set_defaults(func=func)

    s = sub.add_parser("flow", help="block-matching flow fields from PGM frames")
    s.add_argument("frames", nargs="*")
    s.add_argument("--ref", help="reference PGM (first frame if omitted)")
    s.add_argument("--block", type=int, default=9)
    s.add_argument("--search", type=int, default=4)
    s.add_argument("--stride", type=int, default=4)
    s.add_argument("--min-curvature", type=float, default=1.0)
    s.add_argument("--scale", type=float, default=1.0, help="mm per pixel")
    s.add_argument("--rate", type=float, default=19.0, help="frame rate for timestamps, Hz")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_flow)

    s = sub.add_parser("track", help="marker tracking fields from PGM frames")
    s.add_argument("frames", nargs="*")
    s.add_argument("--threshold", type=float, default=128)
    s.add_argument("--min-area", type=int, default=4)
    s.add_argument("--max-area", type=int, default=400)
    s.add_argument("--bright", action="store_true", help="markers are brighter than the gel")
    s.add_argument("--max-disp", type=float, default=5.0, help="px per frame")
    s.add_argument("--ratio", type=float, default=0.8, help="nearest/runner-up distance ratio")
    s.add_argument("--pitch", type=float, default=8.0, help="output grid pitch, px")
    s.add_argument("--grid-w", type=int)
    s.add_argument("--grid-h", type=int)
    s.add_argument("--radius", type=float, default=1.5,
                   help="rasterization radius in grid pitches")
    s.add_argument("--scale", type=float, default=1.0, help="mm per pixel")
    s.add_argument("--rate", type=float, default=19.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_track)

    s = sub.add_parser("rezero-demo", help="compare zeroed and un-zeroed estimation")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--fz", type=float, default=200.0, help="grasp normal force, N")
    s.add_argument("--axis", choices=AXES, default="x")
    s.add_argument("--peak", type=float, default=20.0)
    s.add_argument("--frames", type=int, default=200)
    s.add_argument("--rate", type=float, default=19.0)
    s.add_argument("--noise", type=float, default=0.02)
    s.add_argument("--patch", default="disc:r=6")
    s.add_argument("--grid", default="32x32")
    s.add_argument("--pitch", type=float, default=0.6)
    s.add_argument("--out")
    s.set_defaults(func=cmd_rezero_demo)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (InputError, TactileError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
