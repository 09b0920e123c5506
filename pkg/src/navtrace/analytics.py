"""Per-trace statistics, dataset aggregates, trajectories and gaze divergence.

Distances are measured on the head midpoint in physical-stage meters. fps is
interval based: (n_frames - 1) / duration.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .geometry import head_pose, quat_normalize, quat_rotate, undo_scene_init
from .io_formats import DatasetIndex, read_trace
from .trace_model import CoordinateSpace, SceneInit, SceneRegistry, Trace, TraceError, Vec3


class AnalyticsError(TraceError, ValueError):
    pass


@dataclass(frozen=True)
class TraceStats:
    n_frames: int
    duration_s: float
    fps: float
    distance_m: float
    mean_speed_mps: float
    max_speed_mps: float


def stage_head_positions(t: Trace, init: SceneInit | None = None, *, reciprocal: bool = False) -> list[Vec3]:
    """Head midpoints in stage meters. Stage-space traces need no ``init``."""
    if t.space is CoordinateSpace.PHYSICAL_STAGE:
        return [head_pose(f).position for f in t.frames]
    if init is None:
        raise AnalyticsError("a virtual-world trace needs its scene init to reach stage space")
    if t.scene_id and init.name != t.scene_id:
        raise AnalyticsError(f"scene mismatch: trace is {t.scene_id!r}, init is {init.name!r}")
    return [undo_scene_init(head_pose(f), init, reciprocal=reciprocal).position for f in t.frames]


def trace_stats(t: Trace, init: SceneInit | None = None, *, min_displacement: float = 0.0,
                reciprocal: bool = False) -> TraceStats:
    """Frame count, duration, fps and stage-space distance.

    Steps shorter than ``min_displacement`` meters are ignored when summing
    distance (0 keeps every step).
    """
    n = len(t.frames)
    if n < 2:
        raise AnalyticsError("need at least 2 frames for fps and distance")
    pts = np.array(stage_head_positions(t, init, reciprocal=reciprocal))
    ts = np.array([f.timestamp_ms for f in t.frames])
    span_ms = ts[-1] - ts[0]
    if span_ms <= 0:
        raise AnalyticsError("trace duration is zero")
    steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    if min_displacement > 0:
        steps = np.where(steps >= min_displacement, steps, 0.0)
    distance = float(steps.sum())
    duration = span_ms / 1000.0
    dt = np.diff(ts) / 1000.0
    with np.errstate(divide="ignore", invalid="ignore"):
        speeds = np.where(dt > 0, steps / np.where(dt > 0, dt, 1.0), 0.0)
    return TraceStats(
        n_frames=n,
        duration_s=duration,
        fps=(n - 1) * 1000.0 / span_ms,
        distance_m=distance,
        mean_speed_mps=distance / duration,
        max_speed_mps=float(speeds.max()),
    )


# --------------------------------------------------------------------------
# aggregates

STAT_FIELDS = [f.name for f in fields(TraceStats)]


@dataclass(frozen=True)
class AggregateRow:
    group: str  # "scene", "site" or "scene@site"
    scene_id: str
    site: str
    n_traces: int
    means: dict

    def value(self, name: str) -> float:
        return self.means[name]


@dataclass(frozen=True)
class AggregateTable:
    rows: tuple[AggregateRow, ...]
    per_trace: tuple[tuple[str, str, str, TraceStats], ...]  # (user, scene, site, stats)

    def lookup(self, group: str, scene_id: str = "", site: str = "") -> AggregateRow:
        for r in self.rows:
            if r.group == group and r.scene_id == scene_id and r.site == site:
                return r
        raise KeyError((group, scene_id, site))

    def to_csv(self, delimiter: str = ",") -> str:
        buf = io.StringIO()
        w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
        w.writerow(["group", "scene", "site", "n_traces", *STAT_FIELDS])
        for r in self.rows:
            w.writerow([r.group, r.scene_id, r.site, r.n_traces, *(fmt(r.means[k]) for k in STAT_FIELDS)])
        return buf.getvalue()

    def to_text(self) -> str:
        head = ["group", "scene", "site", "traces", "frames", "duration_s", "fps", "distance_m",
                "mean_mps", "max_mps"]
        body = []
        for r in self.rows:
            m = r.means
            body.append([r.group, r.scene_id or "-", r.site or "-", str(r.n_traces),
                         f"{m['n_frames']:.0f}", f"{m['duration_s']:.2f}", f"{m['fps']:.2f}",
                         f"{m['distance_m']:.2f}", f"{m['mean_speed_mps']:.3f}", f"{m['max_speed_mps']:.3f}"])
        return align([head, *body])


def fmt(v: float) -> str:
    """Fixed 9-significant-digit rendering used for every derived numeric output."""
    return f"{v:.9g}"


def align(table: list[list[str]]) -> str:
    widths = [max(len(row[i]) for row in table) for i in range(len(table[0]))]
    lines = []
    for row in table:
        cells = [c.ljust(w) if i < 3 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"


def load_site_map(path) -> dict[str, str]:
    """Read a ``user,site`` CSV (header optional) into {user_id: site}."""
    out = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or row[0].startswith("#"):
                continue
            if i == 0 and row[0].strip().lower() in ("user", "user_id"):
                continue
            if len(row) < 2:
                raise AnalyticsError(f"{path}: line {i + 1}: expected user,site")
            out[row[0].strip()] = row[1].strip()
    return out


def _mean(stats: list[TraceStats]) -> dict:
    return {k: float(np.mean([getattr(s, k) for s in stats])) for k in STAT_FIELDS}


def aggregate_stats(index: DatasetIndex, registry: SceneRegistry, sites: Mapping[str, str] | None = None, *,
                    loader: Callable[..., Trace] = read_trace, workers: int = 1,
                    min_displacement: float = 0.0, reciprocal: bool = False) -> AggregateTable:
    """Mean of per-trace stats by scene, by site and by scene within site.

    Traces are processed in index order (optionally on a thread pool) and
    reduced in that fixed order, so output never depends on scheduling.
    """
    entries = list(index)
    if not entries:
        raise AnalyticsError("dataset index is empty")
    inits = {e.scene_id: registry[e.scene_id] for e in entries}

    def one(e):
        t = loader(e.path, e.user_id, e.scene_id)
        return trace_stats(t, inits[e.scene_id], min_displacement=min_displacement, reciprocal=reciprocal)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, entries))
    else:
        results = [one(e) for e in entries]

    sites = sites or {}
    per_trace = tuple((e.user_id, e.scene_id, sites.get(e.user_id, ""), s) for e, s in zip(entries, results))

    groups: dict[tuple[str, str, str], list[TraceStats]] = {}
    for user, scene, site, s in per_trace:
        groups.setdefault(("scene", scene, ""), []).append(s)
        if site:
            groups.setdefault(("site", "", site), []).append(s)
            groups.setdefault(("scene@site", scene, site), []).append(s)
    order = {"site": 0, "scene": 1, "scene@site": 2}
    rows = tuple(
        AggregateRow(g, scene, site, len(v), _mean(v))
        for (g, scene, site), v in sorted(groups.items(), key=lambda kv: (order[kv[0][0]], kv[0][1], kv[0][2]))
    )
    return AggregateTable(rows, per_trace)


# --------------------------------------------------------------------------
# trajectories

@dataclass(frozen=True)
class TrajectorySeries:
    t_ms: tuple[float, ...]
    x: tuple[float, ...]
    z: tuple[float, ...]
    y: tuple[float, ...]
    warnings: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.t_ms)

    def xz_csv(self) -> str:
        return "t_ms,x,z\n" + "".join(f"{fmt(t)},{fmt(a)},{fmt(b)}\n" for t, a, b in zip(self.t_ms, self.x, self.z))

    def height_csv(self) -> str:
        return "t_ms,y\n" + "".join(f"{fmt(t)},{fmt(a)}\n" for t, a in zip(self.t_ms, self.y))


STAGE_HALF_EXTENT = 1.5


def trajectory_export(t: Trace, init: SceneInit | None = None, *, center: tuple[float, float] = (0.0, 0.0),
                      half_extent: float = STAGE_HALF_EXTENT, reciprocal: bool = False) -> TrajectorySeries:
    pts = stage_head_positions(t, init, reciprocal=reciprocal)
    warns = []
    for k, p in enumerate(pts):
        if abs(p.x - center[0]) > half_extent or abs(p.z - center[1]) > half_extent:
            warns.append(f"frame {k}: ({p.x:.3f}, {p.z:.3f}) is outside the "
                         f"{2 * half_extent:g} m x {2 * half_extent:g} m stage")
    return TrajectorySeries(
        t_ms=tuple(f.timestamp_ms for f in t.frames),
        x=tuple(p.x for p in pts),
        z=tuple(p.z for p in pts),
        y=tuple(p.y for p in pts),
        warnings=tuple(warns),
    )


# --------------------------------------------------------------------------
# gaze

@dataclass(frozen=True)
class GazeDivergence:
    per_frame_deg: tuple[float, ...]
    mean_deg: float
    p95_deg: float


def _angle_deg(a, b) -> float:
    cross = np.cross(a, b)
    return math.degrees(math.atan2(float(np.linalg.norm(cross)), float(np.dot(a, b))))


def view_divergence_deg(head_q, gaze_q, forward=(0.0, 0.0, -1.0)) -> float:
    hf = quat_rotate(quat_normalize(head_q), forward)
    gf = quat_rotate(quat_normalize(gaze_q), forward)
    return _angle_deg(hf, gf)


def gaze_divergence(t: Trace, forward=(0.0, 0.0, -1.0)) -> GazeDivergence:
    if not t.has_gaze:
        raise AnalyticsError("trace has no gaze data")
    per_frame = []
    for f in t.frames:
        a = [view_divergence_deg(ev.eye_pose.orientation, ev.gaze_pose.orientation, forward) for ev in f.views()]
        per_frame.append((a[0] + a[1]) / 2.0)
    arr = np.array(per_frame)
    return GazeDivergence(tuple(per_frame), float(arr.mean()), float(np.percentile(arr, 95)))
