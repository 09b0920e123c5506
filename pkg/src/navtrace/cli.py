"""``navtrace`` command line.

Exit codes: 0 ok, 1 invalid input / validation failure, 2 I/O error,
3 bad arguments. ``NAVTRACE_DATASET`` sets the default root for
``stats --aggregate``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import analytics, geometry, io_formats, replay, synth
from .trace_model import (
    CoordinateSpace,
    SceneInit,
    TraceError,
    TraceFormatError,
    UnknownSceneError,
    ensure_valid,
    scene_registry,
    validate_trace,
)

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_ARGS = 0, 1, 2, 3
DATASET_ENV = "NAVTRACE_DATASET"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}") from None
    if w <= 0 or h <= 0:
        raise argparse.ArgumentTypeError("image size must be positive")
    return w, h


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return v


def _write(out: str | None, text: str) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8", newline="\n")


def _provenance(cmd: str, **params) -> str:
    items = " ".join(f"{k}={v}" for k, v in params.items())
    return f"# navtrace {cmd} {items}".rstrip() + "\n"


def _scene(args, path=None) -> SceneInit:
    scene = args.scene
    if scene is None and path is not None:
        ids = io_formats.ids_from_filename(path)
        scene = ids[1] if ids else None
    if scene is None:
        raise UsageError("cannot infer the scene from the file name; pass --scene")
    try:
        return scene_registry()[scene]
    except UnknownSceneError as e:
        raise UsageError(str(e)) from None


def _load(args, path, space=CoordinateSpace.VIRTUAL_WORLD, strict=None):
    strict = getattr(args, "strict", False) if strict is None else strict
    t = io_formats.read_trace(path, getattr(args, "user", None), getattr(args, "scene", None),
                              strict=True, space=space)
    if strict:
        ensure_valid(t)
    return t


def _space(name: str) -> CoordinateSpace:
    return CoordinateSpace.PHYSICAL_STAGE if name == "stage" else CoordinateSpace.VIRTUAL_WORLD


# --------------------------------------------------------------------------
# subcommands

def cmd_validate(args) -> int:
    try:
        rows = io_formats.read_rows(Path(args.input).read_bytes())
        ids = io_formats.ids_from_filename(args.input) or ("", "")
        t = io_formats.pair_rows(rows, args.user or ids[0], args.scene or ids[1], strict=False)
    except TraceFormatError as e:
        print(f"{args.input}: error: {TraceFormatError(e.message, e.row, e.column)}", file=sys.stderr)
        return EXIT_INVALID
    report = validate_trace(t, strict=args.strict, gaze_drift=args.gaze_drift)
    lines = [f"{args.input}: {f}" for f in report.findings]
    lines.append(f"{args.input}: {len(t.frames)} frames, {len(report.errors)} errors, "
                 f"{len(report.warnings)} warnings")
    _write(args.output, "\n".join(lines) + "\n")
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_convert(args) -> int:
    if args.direction == "csv2json":
        t = _load(args, args.input)
        _write(args.output, io_formats.csv_to_json(t, flip=args.flip).dumps())
    else:
        doc = io_formats.CameraPathDocument.loads(Path(args.input).read_bytes())
        t = io_formats.json_to_csv(doc, flip=args.flip)
        _write(args.output, io_formats.write_trace_csv(t))
    return EXIT_OK


def cmd_to_stage(args) -> int:
    init = _scene(args, args.input)
    t = _load(args, args.input, CoordinateSpace.VIRTUAL_WORLD)
    out = geometry.trace_to_stage(t, init, reciprocal=args.reciprocal_scale)
    _write(args.output, io_formats.write_trace_csv(out))
    return EXIT_OK


def cmd_to_virtual(args) -> int:
    init = _scene(args, args.input)
    t = _load(args, args.input, CoordinateSpace.PHYSICAL_STAGE)
    out = geometry.trace_to_virtual(t, init, reciprocal=args.reciprocal_scale)
    _write(args.output, io_formats.write_trace_csv(out))
    return EXIT_OK


def cmd_stats(args) -> int:
    params = dict(min_displacement=args.min_displacement, reciprocal_scale=args.reciprocal_scale)
    if args.aggregate:
        root = args.inputs[0] if args.inputs else os.environ.get(DATASET_ENV)
        if not root:
            raise UsageError(f"stats --aggregate needs a dataset root or ${DATASET_ENV}")
        index = io_formats.scan_dataset(root)
        for w in index.warnings:
            print(f"warning: {w}", file=sys.stderr)
        sites = analytics.load_site_map(args.sites) if args.sites else None
        try:
            table = analytics.aggregate_stats(index, scene_registry(), sites, workers=args.workers,
                                              min_displacement=args.min_displacement,
                                              reciprocal=args.reciprocal_scale)
        except UnknownSceneError as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_INVALID
        body = table.to_csv() if args.format == "csv" else table.to_text()
        _write(args.output, _provenance("stats", aggregate=1, **params) + body)
        return EXIT_OK

    if not args.inputs:
        raise UsageError("stats needs at least one trace file")
    space = _space(args.space)
    rows = [["file", "user", "scene", *analytics.STAT_FIELDS]]
    for path in args.inputs:
        t = _load(args, path, space)
        init = None if space is CoordinateSpace.PHYSICAL_STAGE else _scene(args, path)
        s = analytics.trace_stats(t, init, min_displacement=args.min_displacement,
                                  reciprocal=args.reciprocal_scale)
        if args.format == "csv":
            cells = [analytics.fmt(getattr(s, k)) for k in analytics.STAT_FIELDS]
        else:
            cells = [str(s.n_frames), f"{s.duration_s:.3f}", f"{s.fps:.2f}", f"{s.distance_m:.4f}",
                     f"{s.mean_speed_mps:.4f}", f"{s.max_speed_mps:.4f}"]
        rows.append([str(path), t.user_id, t.scene_id, *cells])
    if args.format == "csv":
        body = "".join(",".join(r) + "\n" for r in rows)
    else:
        body = analytics.align(rows)
    _write(args.output, _provenance("stats", **params) + body)
    return EXIT_OK


def cmd_cameras(args) -> int:
    t = _load(args, args.input, _space(args.space))
    cams = replay.camera_stream(t, args.near, args.far, args.image_size)
    doc = replay.cameras_to_document(t, cams)
    d = doc.to_dict()
    d["params"] = {"near": args.near, "far": args.far, "image_size": list(args.image_size)}
    _write(args.output, json.dumps(d, indent=1) + "\n")
    return EXIT_OK


def cmd_gaze_pixels(args) -> int:
    t = _load(args, args.input, _space(args.space))
    out = [_provenance("gaze-pixels", width=args.image_size[0], height=args.image_size[1],
                       forward=args.forward),
           "frame,eye,timestamp_ms,u,v,in_view\n"]
    for k, eye, ts, px in replay.gaze_pixels(t, args.image_size, args.forward):
        out.append(f"{k},{eye},{analytics.fmt(ts)},{analytics.fmt(px.u)},{analytics.fmt(px.v)},{int(px.in_view)}\n")
    _write(args.output, "".join(out))
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.path == "circle":
        path = synth.Circle(args.radius, args.revolutions)
    elif args.path == "line":
        path = synth.Line((0.0, 0.0), (args.length, 0.0))
    else:
        path = synth.Stationary()
    if args.height_amplitude:
        height = synth.SinusoidHeight(args.height, args.height_amplitude, args.height_period)
    else:
        height = synth.ConstantHeight(args.height)
    spec = synth.MotionSpec(args.duration, args.fps, path, height, args.ipd, args.gaze_yaw, args.gaze_pitch,
                            args.gaze_jitter, args.seed, args.user)
    init = _scene(args) if args.scene else None
    try:
        t = synth.generate_trace(spec, init)
    except ValueError as e:
        raise UsageError(str(e)) from None
    _write(args.output, io_formats.write_trace_csv(t))
    return EXIT_OK


def cmd_plot_data(args) -> int:
    space = _space(args.space)
    t = _load(args, args.input, space)
    init = None if space is CoordinateSpace.PHYSICAL_STAGE else _scene(args, args.input)
    series = analytics.trajectory_export(t, init, center=tuple(args.center), half_extent=args.half_extent,
                                         reciprocal=args.reciprocal_scale)
    for w in series.warnings:
        print(f"warning: {w}", file=sys.stderr)
    head = _provenance("plot-data", center_x=args.center[0], center_z=args.center[1],
                       half_extent=args.half_extent)
    _write(f"{args.output_prefix}_xz.csv", head + series.xz_csv())
    _write(f"{args.output_prefix}_y.csv", head + series.height_csv())
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="navtrace", description="6-DoF head/gaze trace toolkit")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, scene=True, output=True):
        if scene:
            sp.add_argument("--scene", help="scene id (default: from user<N>_<scene>.csv)")
        sp.add_argument("--user", help="user id (default: from file name)")
        sp.add_argument("--strict", action="store_true", help="refuse traces with validation errors")
        if output:
            sp.add_argument("-o", "--output", default="-", help="output path (default stdout)")

    def space_flag(sp):
        sp.add_argument("--space", choices=("virtual", "stage"), default="virtual",
                        help="coordinate space of the input trace")

    def scale_flag(sp):
        sp.add_argument("--reciprocal-scale", action="store_true",
                        help="read scene scale as meters per scene unit")

    sp = sub.add_parser("validate", help="check a trace CSV")
    common(sp)
    sp.add_argument("input")
    sp.add_argument("--gaze-drift", type=_positive, default=0.5,
                    help="warn when gaze position is this far from eye position")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("convert", help="csv2json or json2csv")
    sp.add_argument("direction", choices=("csv2json", "json2csv"))
    sp.add_argument("input")
    common(sp, scene=True)
    sp.add_argument("--flip", dest="flip", action="store_true", default=None,
                    help="apply the 180-degree X conjugation (+Y-down <-> +Y-up)")
    sp.add_argument("--no-flip", dest="flip", action="store_false")
    sp.set_defaults(func=cmd_convert)

    for name, func, helptext in (("to-stage", cmd_to_stage, "virtual world -> physical stage"),
                                 ("to-virtual", cmd_to_virtual, "physical stage -> virtual world")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("input")
        common(sp)
        scale_flag(sp)
        sp.set_defaults(func=func)

    sp = sub.add_parser("stats", help="per-trace or dataset statistics")
    sp.add_argument("inputs", nargs="*", help="trace files, or the dataset root with --aggregate")
    common(sp)
    space_flag(sp)
    scale_flag(sp)
    sp.add_argument("--aggregate", action="store_true", help="aggregate a whole dataset directory")
    sp.add_argument("--sites", help="CSV mapping user,site for per-site grouping")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--min-displacement", type=float, default=0.0,
                    help="ignore steps shorter than this many meters")
    sp.add_argument("--format", choices=("table", "csv"), default="table")
    sp.set_defaults(func=cmd_stats)

    for name, func in (("cameras", cmd_cameras), ("gaze-pixels", cmd_gaze_pixels)):
        sp = sub.add_parser(name, help="per-eye camera stream" if name == "cameras" else "gaze image coordinates")
        sp.add_argument("input")
        common(sp)
        space_flag(sp)
        sp.add_argument("--image-size", type=_size, default=replay.DEFAULT_IMAGE_SIZE, metavar="WxH")
        if name == "cameras":
            sp.add_argument("--near", type=_positive, default=replay.DEFAULT_NEAR)
            sp.add_argument("--far", type=_positive, default=replay.DEFAULT_FAR)
        else:
            sp.add_argument("--forward", choices=(replay.FORWARD_NEG_Z, replay.FORWARD_POS_Z),
                            default=replay.FORWARD_NEG_Z)
        sp.set_defaults(func=func)

    sp = sub.add_parser("synth", help="generate a synthetic trace")
    sp.add_argument("-o", "--output", default="-")
    sp.add_argument("--scene", help="apply this scene's init (output is virtual-world)")
    sp.add_argument("--user", default="user0")
    sp.add_argument("--path", choices=("circle", "line", "stationary"), default="circle")
    sp.add_argument("--radius", type=float, default=1.0)
    sp.add_argument("--revolutions", type=float, default=1.0)
    sp.add_argument("--length", type=float, default=1.0, help="line length in meters")
    sp.add_argument("--duration", type=float, default=60.0)
    sp.add_argument("--fps", type=float, default=60.0)
    sp.add_argument("--height", type=float, default=1.6)
    sp.add_argument("--height-amplitude", type=float, default=0.0)
    sp.add_argument("--height-period", type=float, default=2.0)
    sp.add_argument("--ipd", type=float, default=0.063)
    sp.add_argument("--gaze-yaw", type=float, default=0.0)
    sp.add_argument("--gaze-pitch", type=float, default=0.0)
    sp.add_argument("--gaze-jitter", type=float, default=0.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("plot-data", help="XZ path and height-vs-time series")
    sp.add_argument("input")
    sp.add_argument("output_prefix")
    common(sp, output=False)
    space_flag(sp)
    scale_flag(sp)
    sp.add_argument("--center", type=float, nargs=2, default=(0.0, 0.0), metavar=("X", "Z"))
    sp.add_argument("--half-extent", type=_positive, default=analytics.STAGE_HALF_EXTENT)
    sp.set_defaults(func=cmd_plot_data)
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_ARGS
    except TraceError as e:
        if isinstance(e, OSError):
            print(f"error: {e}", file=sys.stderr)
            return EXIT_IO
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"error: {e.filename or ''}: {e.strerror or e}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
