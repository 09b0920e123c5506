"""Trace CSV, camera-path JSON, and dataset directory indexing.

CSV columns are resolved from the header row, so both the documented column
order and the variant with gaze quaternion before gaze position parse the same.
Header names match case-insensitively with separators ignored (``Pos_X``,
``pos x`` and ``POSX`` are the same column).
"""

from __future__ import annotations

import io
import json
import logging
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from .geometry import (
    GeometryError,
    flip_conjugate,
    is_orthonormal,
    mat_to_quat,
    pose_matrix,
)
from .trace_model import (
    LEFT_EYE,
    RIGHT_EYE,
    CoordinateSpace,
    EyeView,
    FovAngles,
    Frame,
    Pose,
    Quat,
    Trace,
    TraceError,
    TraceFormatError,
    Vec3,
)

log = logging.getLogger(__name__)

COLUMNS = (
    "ViewIndex", "FOV1", "FOV2", "FOV3", "FOV4",
    "Pos_X", "Pos_Y", "Pos_Z",
    "Quat_X", "Quat_Y", "Quat_Z", "Quat_W",
    "GazePos_X", "GazePos_Y", "GazePos_Z",
    "GazeQ_X", "GazeQ_Y", "GazeQ_Z", "GazeQ_W",
    "Timestamp",
)
GAZE_COLUMNS = COLUMNS[12:19]
CORE_COLUMNS = tuple(c for c in COLUMNS if c not in GAZE_COLUMNS)

_ALIASES = {
    "view": "viewindex", "eye": "viewindex", "eyeindex": "viewindex",
    "time": "timestamp", "timestampms": "timestamp",
}
for _axis in "xyz":
    _ALIASES[f"position{_axis}"] = f"pos{_axis}"
    _ALIASES[f"gazeposition{_axis}"] = f"gazepos{_axis}"
for _axis in "xyzw":
    _ALIASES[f"quaternion{_axis}"] = f"quat{_axis}"
    _ALIASES[f"gazequaternion{_axis}"] = f"gazeq{_axis}"
    _ALIASES[f"gazequat{_axis}"] = f"gazeq{_axis}"


def _norm_key(name: str) -> str:
    key = re.sub(r"\(.*?\)", "", name)
    key = re.sub(r"[^0-9a-z]", "", key.lower())
    return _ALIASES.get(key, key)


_KEY_TO_COLUMN = {_norm_key(c): c for c in COLUMNS}


def resolve_header(header: list[str]) -> dict[str, int]:
    """Map canonical column name -> index in the file's header."""
    out: dict[str, int] = {}
    for i, name in enumerate(header):
        key = _norm_key(name.strip())
        if key not in _KEY_TO_COLUMN:
            raise TraceFormatError(f"unknown header column {name.strip()!r}", column=name.strip())
        col = _KEY_TO_COLUMN[key]
        if col in out:
            raise TraceFormatError(f"duplicate header column {name.strip()!r}", column=col)
        out[col] = i
    missing = [c for c in CORE_COLUMNS if c not in out]
    if missing:
        raise TraceFormatError(f"missing header columns: {', '.join(missing)}")
    gaze = [c for c in GAZE_COLUMNS if c in out]
    if gaze and len(gaze) != len(GAZE_COLUMNS):
        missing = [c for c in GAZE_COLUMNS if c not in out]
        raise TraceFormatError(f"incomplete gaze columns, missing: {', '.join(missing)}")
    return out


def _as_text(stream) -> Iterable[str]:
    if isinstance(stream, (bytes, bytearray)):
        return io.StringIO(bytes(stream).decode("utf-8-sig"))
    if isinstance(stream, str):
        return io.StringIO(stream)
    if isinstance(stream, io.TextIOBase):
        return stream
    return io.TextIOWrapper(stream, encoding="utf-8-sig")


def _parse_view(cells: list[str], cols: dict[str, int], row: int, space: CoordinateSpace) -> EyeView:
    has_gaze = GAZE_COLUMNS[0] in cols
    text = {}
    vals = {}
    for c, i in cols.items():
        if i >= len(cells):
            raise TraceFormatError("too few fields", row=row, column=c)
        t = cells[i].strip()
        try:
            v = float(t)
        except ValueError:
            raise TraceFormatError(f"non-numeric value {t!r}", row=row, column=c) from None
        text[c] = t
        vals[c] = v
    if len(cells) > len(cols):
        raise TraceFormatError(f"expected {len(cols)} fields, got {len(cells)}", row=row)

    eye_f = vals["ViewIndex"]
    if eye_f != int(eye_f):
        raise TraceFormatError(f"non-integer view index {text['ViewIndex']!r}", row=row, column="ViewIndex")

    eye_pose = Pose(Vec3(vals["Pos_X"], vals["Pos_Y"], vals["Pos_Z"]),
                    Quat(vals["Quat_X"], vals["Quat_Y"], vals["Quat_Z"], vals["Quat_W"]), space)
    gaze_pose = None
    if has_gaze:
        gaze_pose = Pose(Vec3(vals["GazePos_X"], vals["GazePos_Y"], vals["GazePos_Z"]),
                         Quat(vals["GazeQ_X"], vals["GazeQ_Y"], vals["GazeQ_Z"], vals["GazeQ_W"]), space)
    source = tuple(text.get(c, "") for c in COLUMNS)
    return EyeView(
        eye=int(eye_f),
        fov=FovAngles(vals["FOV1"], vals["FOV2"], vals["FOV3"], vals["FOV4"]),
        eye_pose=eye_pose,
        gaze_pose=gaze_pose,
        timestamp_ms=vals["Timestamp"],
        source=source,
    )


def read_rows(stream, space: CoordinateSpace = CoordinateSpace.VIRTUAL_WORLD) -> list[EyeView]:
    """Parse every data row. Blank lines and lines starting with '#' are skipped."""
    cols = None
    rows: list[EyeView] = []
    for line in _as_text(stream):
        line = line.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cells = line.split(",")
        if cols is None:
            cols = resolve_header(cells)
            continue
        rows.append(_parse_view(cells, cols, len(rows) + 1, space))
    if cols is None:
        raise TraceFormatError("missing header row")
    return rows


def pair_rows(rows: list[EyeView], user_id: str, scene_id: str, *, strict: bool = True,
              space: CoordinateSpace = CoordinateSpace.VIRTUAL_WORLD) -> Trace:
    """Group consecutive rows into (left, right) frames.

    Strict mode rejects eye-pattern breaks and an odd row count. Lenient mode
    pairs positionally and keeps any trailing row so validation can report it.
    """
    if not rows:
        raise TraceFormatError("no frames")
    if strict:
        for i, ev in enumerate(rows):
            if ev.eye != i % 2:
                raise TraceFormatError(
                    f"eye-index pairing broken at row {i + 1} (expected {i % 2}, got {ev.eye})", row=i + 1)
        if len(rows) % 2:
            raise TraceFormatError(f"odd row count: row {len(rows)} has no partner", row=len(rows))
    n = len(rows) // 2
    if n == 0:
        raise TraceFormatError("no frames", row=1)
    frames = tuple(Frame(rows[2 * k], rows[2 * k + 1]) for k in range(n))
    trailing = rows[-1] if len(rows) % 2 else None
    return Trace(user_id, scene_id, frames, space, trailing)


def parse_trace_csv(stream, user_id: str = "", scene_id: str = "", *, strict: bool = True,
                    space: CoordinateSpace = CoordinateSpace.VIRTUAL_WORLD) -> Trace:
    return pair_rows(read_rows(stream, space), user_id, scene_id, strict=strict, space=space)


FILENAME_RE = re.compile(r"^(user\d+)_(.+)\.csv$")


def ids_from_filename(path) -> tuple[str, str] | None:
    m = FILENAME_RE.match(Path(path).name)
    return (m.group(1), m.group(2)) if m else None


def read_trace(path, user_id: str | None = None, scene_id: str | None = None, *,
               strict: bool = True, space: CoordinateSpace = CoordinateSpace.VIRTUAL_WORLD) -> Trace:
    path = Path(path)
    ids = ids_from_filename(path) or (path.stem, "")
    try:
        with path.open("rb") as fh:
            return parse_trace_csv(fh.read(), user_id or ids[0], scene_id or ids[1],
                                   strict=strict, space=space)
    except TraceFormatError as e:
        raise TraceFormatError(e.message, row=e.row, column=e.column, path=str(path)) from None


# --------------------------------------------------------------------------
# writing

def format_float(v: float) -> str:
    """Shortest text that parses back to exactly ``v``."""
    if not math.isfinite(v):
        return repr(float(v))
    if v == int(v) and abs(v) < 1e16:
        return str(int(v)) if v != 0 or math.copysign(1, v) > 0 else "-0"
    return repr(float(v))


def _row_values(ev: EyeView, with_gaze: bool) -> list[float]:
    p, q = ev.eye_pose.position, ev.eye_pose.orientation
    vals = [float(ev.eye), *ev.fov.as_tuple(), *p, *q]
    if with_gaze:
        g = ev.gaze_pose
        vals += [*g.position, *g.orientation]
    vals.append(ev.timestamp_ms)
    return vals


def write_trace_csv(t: Trace, stream: IO[str] | None = None) -> str:
    """Header then left/right rows per frame; returns the text written.

    Cells whose value still equals the parsed source text are echoed verbatim.
    """
    if not t.frames:
        raise TraceFormatError("no frames")
    with_gaze = t.has_gaze
    if not with_gaze and any(v.gaze_pose is not None for v in t.views()):
        raise TraceError("gaze data present on some rows only")
    cols = COLUMNS if with_gaze else CORE_COLUMNS
    src_index = [COLUMNS.index(c) for c in cols]
    lines = [",".join(cols)]
    for ev in t.views():
        vals = _row_values(ev, with_gaze)
        cells = []
        for v, si in zip(vals, src_index):
            src = ev.source[si] if ev.source else ""
            if src:
                try:
                    same = float(src) == v and math.copysign(1, float(src)) == math.copysign(1, v)
                except ValueError:
                    same = False
                if same:
                    cells.append(src)
                    continue
            cells.append(format_float(v))
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    if stream is not None:
        stream.write(text)
    return text


def write_trace(t: Trace, path) -> None:
    Path(path).write_text(write_trace_csv(t), encoding="utf-8", newline="\n")


# --------------------------------------------------------------------------
# camera-path JSON

JSON_FORMAT = "navtrace.camera_path"
JSON_VERSION = 1
CONVENTION_SOURCE = "source"
CONVENTION_FLIPPED = "x180_conjugated"


@dataclass(frozen=True)
class CameraRecord:
    timestamp_ms: float
    eye: int
    camera_to_world: tuple[float, ...]  # 16 numbers, row-major
    fov: tuple[float, float, float, float]
    gaze_to_world: tuple[float, ...] | None = None

    def matrix(self) -> np.ndarray:
        return np.array(self.camera_to_world, dtype=float).reshape(4, 4)


@dataclass(frozen=True)
class CameraPathDocument:
    scene_id: str
    user_id: str
    space: CoordinateSpace
    convention: str
    frames: tuple[CameraRecord, ...]
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def flipped(self) -> bool:
        return self.convention == CONVENTION_FLIPPED

    def to_dict(self) -> dict:
        d = {
            "format": JSON_FORMAT,
            "version": JSON_VERSION,
            "scene_id": self.scene_id,
            "user_id": self.user_id,
            "space": self.space.value,
            "convention": self.convention,
            "matrix_layout": "row_major",
            "frames": [],
        }
        for r in self.frames:
            rec = {
                "timestamp_ms": r.timestamp_ms,
                "eye": r.eye,
                "camera_to_world": list(r.camera_to_world),
                "fov": list(r.fov),
            }
            if r.gaze_to_world is not None:
                rec["gaze_to_world"] = list(r.gaze_to_world)
            d["frames"].append(rec)
        d.update(self.extra)
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "CameraPathDocument":
        try:
            frames = []
            for i, r in enumerate(d["frames"]):
                m = tuple(float(v) for v in r["camera_to_world"])
                g = r.get("gaze_to_world")
                for name, mat in (("camera_to_world", m), ("gaze_to_world", g)):
                    if mat is not None and len(mat) != 16:
                        raise TraceFormatError(f"{name} must have 16 entries", row=i + 1)
                frames.append(CameraRecord(
                    float(r["timestamp_ms"]), int(r["eye"]), m,
                    tuple(float(v) for v in r["fov"]),
                    tuple(float(v) for v in g) if g is not None else None,
                ))
            known = {"format", "version", "scene_id", "user_id", "space", "convention",
                     "matrix_layout", "frames"}
            return cls(
                scene_id=str(d.get("scene_id", "")),
                user_id=str(d.get("user_id", "")),
                space=CoordinateSpace(d.get("space", CoordinateSpace.VIRTUAL_WORLD.value)),
                convention=d.get("convention", CONVENTION_SOURCE),
                frames=tuple(frames),
                extra={k: v for k, v in d.items() if k not in known},
            )
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, TraceFormatError):
                raise
            raise TraceFormatError(f"malformed camera-path document: {e}") from None

    @classmethod
    def loads(cls, text: str | bytes) -> "CameraPathDocument":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise TraceFormatError(f"invalid JSON: {e}") from None


def _flat(m: np.ndarray) -> tuple[float, ...]:
    return tuple(float(v) for v in np.asarray(m).reshape(16))


def csv_to_json(t: Trace, flip: bool = False) -> CameraPathDocument:
    """Per eye view, camera_to_world = T(position) @ R(orientation).

    With ``flip`` each matrix is conjugated by diag(1, -1, -1, 1), switching
    both world and camera axes between the +Y-down and +Y-up conventions.
    """
    records = []
    for ev in t.views():
        m = pose_matrix(ev.eye_pose)
        g = pose_matrix(ev.gaze_pose) if ev.gaze_pose is not None else None
        if flip:
            m = flip_conjugate(m)
            g = flip_conjugate(g) if g is not None else None
        records.append(CameraRecord(ev.timestamp_ms, ev.eye, _flat(m), ev.fov.as_tuple(),
                                    _flat(g) if g is not None else None))
    return CameraPathDocument(t.scene_id, t.user_id, t.space,
                              CONVENTION_FLIPPED if flip else CONVENTION_SOURCE, tuple(records))


def _matrix_pose(m: np.ndarray, space: CoordinateSpace, row: int, name: str) -> Pose:
    if not np.allclose(m[3], (0.0, 0.0, 0.0, 1.0), atol=1e-12, rtol=0):
        raise TraceFormatError(f"{name} last row must be (0, 0, 0, 1)", row=row)
    if not is_orthonormal(m[:3, :3]):
        raise TraceFormatError(f"{name} rotation block is not orthonormal", row=row)
    try:
        q = mat_to_quat(m)
    except GeometryError as e:
        raise TraceFormatError(str(e), row=row) from None
    return Pose(Vec3(float(m[0, 3]), float(m[1, 3]), float(m[2, 3])), q, space)


def json_to_csv(doc: CameraPathDocument, flip: bool | None = None) -> Trace:
    """Inverse of :func:`csv_to_json`. ``flip=None`` follows the document's marker."""
    if flip is None:
        flip = doc.flipped
    views = []
    for i, r in enumerate(doc.frames):
        row = i + 1
        m = r.matrix()
        g = np.array(r.gaze_to_world, dtype=float).reshape(4, 4) if r.gaze_to_world is not None else None
        if flip:
            m = flip_conjugate(m)
            g = flip_conjugate(g) if g is not None else None
        if len(r.fov) != 4:
            raise TraceFormatError("fov must have four angles", row=row)
        views.append(EyeView(
            eye=r.eye,
            fov=FovAngles(*r.fov),
            eye_pose=_matrix_pose(m, doc.space, row, "camera_to_world"),
            gaze_pose=_matrix_pose(g, doc.space, row, "gaze_to_world") if g is not None else None,
            timestamp_ms=r.timestamp_ms,
        ))
    if not views:
        raise TraceFormatError("no frames")
    frames = []
    i = 0
    while i < len(views):
        a = views[i]
        b = views[i + 1] if i + 1 < len(views) else None
        if a.eye != LEFT_EYE or b is None or b.eye != RIGHT_EYE:
            raise TraceFormatError("unpaired eye records: expected left (0) then right (1)", row=i + 1)
        frames.append(Frame(a, b))
        i += 2
    return Trace(doc.user_id, doc.scene_id, tuple(frames), doc.space)


# --------------------------------------------------------------------------
# dataset layout

@dataclass(frozen=True)
class DatasetEntry:
    user_id: str
    scene_id: str
    path: Path


@dataclass(frozen=True)
class DatasetIndex:
    entries: tuple[DatasetEntry, ...]
    warnings: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def scenes(self) -> list[str]:
        return sorted({e.scene_id for e in self.entries})


class DatasetError(TraceError, OSError):
    pass


def scan_dataset(root) -> DatasetIndex:
    """Index ``<root>/<scene>/user<digits>_<scene>.csv``; anything else is a warning."""
    root = Path(root)
    try:
        top = sorted(os.scandir(root), key=lambda d: d.name)
    except OSError as e:
        raise DatasetError(f"cannot read dataset root {root}: {e.strerror or e}") from e
    entries, warnings = [], []
    for d in top:
        if not d.is_dir():
            warnings.append(f"skipping {d.path}: not a scene directory")
            continue
        for f in sorted(os.scandir(d.path), key=lambda x: x.name):
            ids = ids_from_filename(f.name) if f.is_file() else None
            if ids is None:
                warnings.append(f"skipping {f.path}: name does not match user<digits>_<scene>.csv")
            elif ids[1] != d.name:
                warnings.append(f"skipping {f.path}: scene {ids[1]!r} does not match directory {d.name!r}")
            else:
                entries.append(DatasetEntry(ids[0], ids[1], Path(f.path)))
    for w in warnings:
        log.warning(w)
    return DatasetIndex(tuple(entries), tuple(warnings))
