"""Domain types for 6-DoF head/gaze traces and the per-scene init table.

All types are frozen. Quaternions are stored in (x, y, z, w) order exactly as
recorded; nothing here normalizes recorded values, so files round-trip
byte-for-byte. Geometry code normalizes on use.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, NamedTuple


class TraceError(Exception):
    """Base class for all errors raised by this package."""


class TraceFormatError(TraceError, ValueError):
    """Malformed input, with optional 1-based data-row and column location."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None,
                 path: str | None = None):
        self.row = row
        self.column = column
        self.path = path
        where = []
        if path:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        if column:
            where.append(f"column {column}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.message = message


class SpaceMismatchError(TraceError, ValueError):
    pass


class UnknownSceneError(TraceError, KeyError):
    def __str__(self) -> str:
        return f"unknown scene: {self.args[0]!r}"


class InvalidTraceError(TraceError, ValueError):
    """Raised when a strict consumer is handed a trace with error-level findings."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__("; ".join(str(f) for f in report.errors) or "invalid trace")


class CoordinateSpace(str, enum.Enum):
    VIRTUAL_WORLD = "virtual_world"
    PHYSICAL_STAGE = "physical_stage"


class Vec3(NamedTuple):
    x: float
    y: float
    z: float

    def __add__(self, other):  # type: ignore[override]
        return Vec3(self.x + other[0], self.y + other[1], self.z + other[2])

    def __sub__(self, other):
        return Vec3(self.x - other[0], self.y - other[1], self.z - other[2])

    def scaled(self, s: float) -> "Vec3":
        return Vec3(self.x * s, self.y * s, self.z * s)

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def is_finite(self) -> bool:
        return all(math.isfinite(c) for c in self)


class Quat(NamedTuple):
    """Quaternion in (x, y, z, w) order. Not forced to unit length."""

    x: float
    y: float
    z: float
    w: float

    @classmethod
    def identity(cls) -> "Quat":
        return cls(0.0, 0.0, 0.0, 1.0)

    def norm_sq(self) -> float:
        return self.x * self.x + self.y * self.y + self.z * self.z + self.w * self.w

    def conjugate(self) -> "Quat":
        return Quat(-self.x, -self.y, -self.z, self.w)

    def canonical(self) -> "Quat":
        """Sign representative with w >= 0 (ties broken on the first nonzero of x, y, z)."""
        for c in (self.w, self.x, self.y, self.z):
            if c > 0:
                return self
            if c < 0:
                return Quat(-self.x, -self.y, -self.z, -self.w)
        return self

    def is_finite(self) -> bool:
        return all(math.isfinite(c) for c in self)


# Spec-level name for normalized quaternions; same representation.
UnitQuat = Quat


@dataclass(frozen=True)
class Pose:
    position: Vec3
    orientation: Quat
    space: CoordinateSpace = CoordinateSpace.VIRTUAL_WORLD


@dataclass(frozen=True)
class FovAngles:
    """Signed half-angles in radians, in recorded FOV1..FOV4 order."""

    left: float
    right: float
    top: float
    bottom: float

    def problems(self) -> list[str]:
        out = []
        if not all(math.isfinite(a) for a in self.as_tuple()):
            return ["non-finite FOV angle"]
        if not self.left < self.right:
            out.append(f"FOV left ({self.left}) must be < right ({self.right})")
        if self.top == self.bottom:
            out.append("FOV top equals bottom")
        if any(abs(a) >= math.pi / 2 for a in self.as_tuple()):
            out.append("FOV angle magnitude must be < pi/2")
        return out

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.left, self.right, self.top, self.bottom)


LEFT_EYE = 0
RIGHT_EYE = 1


@dataclass(frozen=True)
class EyeView:
    """One CSV row.

    ``gaze_pose`` is None when the trace has no gaze columns. ``source`` holds the
    original cell text in canonical column order for rows read from a file; the
    writer reuses it for any field whose value is unchanged.
    """

    eye: int
    fov: FovAngles
    eye_pose: Pose
    gaze_pose: Pose | None
    timestamp_ms: float
    source: tuple[str, ...] | None = field(default=None, compare=False, repr=False)

    @property
    def space(self) -> CoordinateSpace:
        return self.eye_pose.space


@dataclass(frozen=True)
class Frame:
    left: EyeView
    right: EyeView

    @property
    def timestamp_ms(self) -> float:
        return self.left.timestamp_ms

    def views(self) -> tuple[EyeView, EyeView]:
        return (self.left, self.right)


@dataclass(frozen=True)
class Trace:
    user_id: str
    scene_id: str
    frames: tuple[Frame, ...]
    space: CoordinateSpace = CoordinateSpace.VIRTUAL_WORLD
    # A final unpaired row kept by lenient parsing so validation can report it.
    trailing: EyeView | None = None

    def __post_init__(self):
        if not isinstance(self.frames, tuple):
            object.__setattr__(self, "frames", tuple(self.frames))
        if not self.frames:
            raise TraceFormatError("no frames")

    def __len__(self) -> int:
        return len(self.frames)

    def views(self) -> Iterator[EyeView]:
        for f in self.frames:
            yield f.left
            yield f.right

    @property
    def has_gaze(self) -> bool:
        return all(v.gaze_pose is not None for v in self.views())


@dataclass(frozen=True)
class SceneInit:
    """Per-scene tilt/scale/start-position correction.

    ``q_table`` keeps the rounded quaternion as printed; ``q_init`` is its
    normalization, used for all rotation work. ``scale`` is scene units per meter.
    """

    name: str
    q_table: Quat
    scale: float
    init_pos: Vec3
    q_init: Quat = field(init=False)

    # Four-decimal rounding puts nyc at |q|^2 - 1 = -2.8e-4, so 1e-4 is too tight.
    NORM_TOLERANCE = 1e-3

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"scene {self.name!r}: scale must be positive, got {self.scale}")
        n2 = self.q_table.norm_sq()
        if abs(n2 - 1.0) > self.NORM_TOLERANCE:
            raise ValueError(f"scene {self.name!r}: quaternion norm^2 {n2} is not near 1")
        n = math.sqrt(n2)
        object.__setattr__(self, "q_init", Quat(*(c / n for c in self.q_table)))

    @classmethod
    def identity(cls, name: str = "synthetic") -> "SceneInit":
        return cls(name, Quat.identity(), 1.0, Vec3(0.0, 0.0, 0.0))


_SCENE_ROWS = [
    # scene, (qx, qy, qz, qw), scale, (x, y, z)
    ("truck", (-0.0896, 0, 0, 0.9960), 0.76, (0, 2.1, -4)),
    ("treehill", (-0.1961, 0, 0, 0.9806), 12, (2, 1.4, 2)),
    ("train", (0.0499, 0, 0.01, 0.9987), 0.36, (2, -1, 6)),
    ("stump", (-0.3950, 0, 0, 0.9187), 1, (-1, 2.65, -2.5)),
    ("room", (-0.2334, 0, 0, 0.9724), 2, (0, 1.15, 0)),
    ("playroom", (-0.1961, 0, 0, 0.9806), 2.7, (0, 0.88, 0)),
    ("drjohnson", (-0.3699, 0, 0.5976, 0.7114), 1, (0, 1.5, 0)),
    ("bicycle", (-0.1142, 0, 0, 0.9935), 1.25, (1.5, 1.1, 0)),
    ("nyc", (-0.1483, 0, 0, 0.9888), 0.64, (-1.6, 4.4, 4)),
    ("london", (0, 0, 0, 1), 0.53, (18, 12, -11)),
    ("berlin", (0.0299, 0, -0.0599, 0.9978), 0.8, (-1, 1.8, -1.3)),
    ("alameda", (-0.1867, 0, 0, 0.9824), 0.64, (3, 2.6, -1)),
]


class SceneRegistry(Mapping[str, SceneInit]):
    """Read-only scene_id -> SceneInit map; unknown ids raise UnknownSceneError."""

    def __init__(self, entries: Mapping[str, SceneInit]):
        self._entries = dict(entries)

    def __getitem__(self, scene_id: str) -> SceneInit:
        try:
            return self._entries[scene_id]
        except KeyError:
            raise UnknownSceneError(scene_id) from None

    def __iter__(self):
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)


_REGISTRY: SceneRegistry | None = None


def scene_registry() -> SceneRegistry:
    global _REGISTRY
    if _REGISTRY is None:
        _REGISTRY = SceneRegistry({
            name: SceneInit(name, Quat(*map(float, q)), float(s), Vec3(*map(float, p)))
            for name, q, s, p in _SCENE_ROWS
        })
    return _REGISTRY


# --------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class Finding:
    level: str  # "error" | "warning"
    message: str
    row: int | None = None

    def __str__(self) -> str:
        loc = f"row {self.row}: " if self.row is not None else ""
        return f"{self.level}: {loc}{self.message}"


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...] = ()

    @property
    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.level == "error"]

    @property
    def warnings(self) -> list[Finding]:
        return [f for f in self.findings if f.level == "warning"]

    @property
    def ok(self) -> bool:
        return not self.errors


QUAT_NORM_TOLERANCE = 1e-4
HEAD_QUAT_TOLERANCE = 1e-6
DEFAULT_GAZE_DRIFT = 0.5


def validate_trace(trace: Trace, strict: bool = False, *,
                   gaze_drift: float = DEFAULT_GAZE_DRIFT) -> ValidationReport:
    """Check every row/frame invariant and return all findings.

    Rows are numbered from 1 in file order, header excluded. ``strict`` only
    changes how a trailing unpaired row is graded (error vs. warning).
    """
    out: list[Finding] = []

    def err(msg, row=None):
        out.append(Finding("error", msg, row))

    def warn(msg, row=None):
        out.append(Finding("warning", msg, row))

    rows = list(trace.views())
    if trace.trailing is not None:
        rows.append(trace.trailing)

    prev_ts = None
    for i, ev in enumerate(rows):
        row = i + 1
        expected = i % 2
        if ev.eye not in (LEFT_EYE, RIGHT_EYE):
            err(f"eye index {ev.eye} is not 0 or 1", row)
        elif ev.eye != expected:
            err(f"eye-index pairing broken at row {row} (expected {expected}, got {ev.eye})", row)

        for problem in ev.fov.problems():
            err(problem, row)

        if ev.space != trace.space or (ev.gaze_pose is not None and ev.gaze_pose.space != trace.space):
            err("pose space tag differs from trace space", row)

        if not ev.eye_pose.position.is_finite() or not ev.eye_pose.orientation.is_finite():
            err("non-finite eye pose", row)
        else:
            n2 = ev.eye_pose.orientation.norm_sq()
            if abs(n2 - 1.0) > QUAT_NORM_TOLERANCE:
                err(f"non-unit quaternion (norm^2 = {n2:.6g})", row)

        if ev.gaze_pose is not None:
            g = ev.gaze_pose
            if not g.position.is_finite() or not g.orientation.is_finite():
                err("non-finite gaze pose", row)
            else:
                n2 = g.orientation.norm_sq()
                if abs(n2 - 1.0) > QUAT_NORM_TOLERANCE:
                    err(f"non-unit gaze quaternion (norm^2 = {n2:.6g})", row)
                drift = (g.position - ev.eye_pose.position).norm()
                if drift > gaze_drift:
                    warn(f"gaze position {drift:.6g} from eye position (threshold {gaze_drift})", row)

        if not math.isfinite(ev.timestamp_ms) or ev.timestamp_ms < 0:
            err(f"invalid timestamp {ev.timestamp_ms}", row)
        elif prev_ts is not None and ev.timestamp_ms < prev_ts:
            err(f"timestamp regression ({ev.timestamp_ms} < {prev_ts})", row)
        if math.isfinite(ev.timestamp_ms):
            prev_ts = ev.timestamp_ms

    for k, fr in enumerate(trace.frames):
        ql, qr = fr.left.eye_pose.orientation, fr.right.eye_pose.orientation
        if any(abs(a - b) > HEAD_QUAT_TOLERANCE for a, b in zip(ql, qr)):
            err("head quaternion differs between left and right rows", 2 * k + 2)
        if fr.left.eye_pose.position == fr.right.eye_pose.position:
            warn("left and right eye positions coincide (zero IPD)", 2 * k + 2)

    if not trace.has_gaze and any(v.gaze_pose is not None for v in trace.views()):
        err("gaze data present on some rows only")

    if trace.trailing is not None:
        row = len(rows)
        if strict:
            err(f"odd row count: row {row} has no partner", row)
        else:
            warn(f"odd row count: dropped unpaired row {row}", row)

    return ValidationReport(tuple(out))


def ensure_valid(trace: Trace, **kwargs) -> Trace:
    report = validate_trace(trace, strict=True, **kwargs)
    if not report.ok:
        raise InvalidTraceError(report)
    return trace
