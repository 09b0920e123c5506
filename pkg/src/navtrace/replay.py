"""Per-eye camera synthesis for replaying a trace without a headset.

Projection matrices follow the OpenGL layout (camera looks down -Z, clip-space
depth in [-1, 1]). Image coordinates put the origin at the top-left corner
with v growing downward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np

from .geometry import GeometryError, pose_matrix, quat_inverse, quat_normalize, quat_rotate, rigid_inverse
from .io_formats import CameraPathDocument, CameraRecord
from .trace_model import EyeView, FovAngles, Pose, Trace

DEFAULT_NEAR = 0.01
DEFAULT_FAR = 1000.0
DEFAULT_IMAGE_SIZE = (2160, 2224)

FORWARD_NEG_Z = "-z"
FORWARD_POS_Z = "+z"


@dataclass(frozen=True)
class EyeCamera:
    eye: int
    view: np.ndarray
    projection: np.ndarray
    timestamp_ms: float
    width: int
    height: int
    frame_index: int = 0


@dataclass(frozen=True)
class GazePixel:
    u: float
    v: float
    in_view: bool


def fov_tangents(fov: FovAngles) -> tuple[float, float, float, float]:
    """(left, right, top, bottom) tangents; vertical pair ordered so top > bottom.

    Recorded FOV3/FOV4 signs do not match their top/bottom labels in every
    source, so the vertical extent is taken from the two values' order.
    """
    l, r, a, b = (float(v) for v in _tangents_mp(fov.as_tuple()))
    return l, r, max(a, b), min(a, b)


_PREC = 113  # bits; enough that each entry below is rounded to float64 once


@lru_cache(maxsize=256)
def _tangents_mp(angles: tuple[float, ...]) -> tuple:
    with mpmath.workprec(_PREC):
        return tuple(mpmath.tan(mpmath.mpf(a)) for a in angles)


def projection_from_fov(fov: FovAngles, near: float = DEFAULT_NEAR, far: float = DEFAULT_FAR) -> np.ndarray:
    if not (near > 0 and far > near):
        raise GeometryError(f"need 0 < near < far, got near={near} far={far}")
    return np.array(_projection(fov.as_tuple(), float(near), float(far)))


@lru_cache(maxsize=256)
def _projection(angles: tuple[float, ...], near: float, far: float) -> tuple:
    # Entries are evaluated in extended precision and rounded once, so results
    # do not depend on the platform's libm (a symmetric 45-degree frustum gives 1.0).
    with mpmath.workprec(_PREC):
        tl, tr, ta, tb = _tangents_mp(angles)
        t, b = max(ta, tb), min(ta, tb)
        if not tl < tr:
            raise GeometryError(f"degenerate horizontal FOV: tan(left)={float(tl)} >= tan(right)={float(tr)}")
        if t == b:
            raise GeometryError("degenerate vertical FOV: top and bottom tangents are equal")
        n, f = mpmath.mpf(near), mpmath.mpf(far)
        p = [[0.0] * 4 for _ in range(4)]
        p[0][0] = float(2 / (tr - tl))
        p[1][1] = float(2 / (t - b))
        p[0][2] = float((tr + tl) / (tr - tl))
        p[1][2] = float((t + b) / (t - b))
        p[2][2] = float(-(f + n) / (f - n))
        p[2][3] = float(-2 * f * n / (f - n))
        p[3][2] = -1.0
    return tuple(tuple(row) for row in p)


def view_matrix(p: Pose) -> np.ndarray:
    """World -> eye transform, the inverse of the pose's camera-to-world."""
    return rigid_inverse(pose_matrix(p))


def camera_for_view(ev: EyeView, near: float = DEFAULT_NEAR, far: float = DEFAULT_FAR,
                    image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE, frame_index: int = 0) -> EyeCamera:
    return EyeCamera(ev.eye, view_matrix(ev.eye_pose), projection_from_fov(ev.fov, near, far),
                     ev.timestamp_ms, image_size[0], image_size[1], frame_index)


def camera_stream(t: Trace, near: float = DEFAULT_NEAR, far: float = DEFAULT_FAR,
                  image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE) -> list[EyeCamera]:
    out = []
    for k, fr in enumerate(t.frames):
        for ev in fr.views():
            try:
                out.append(camera_for_view(ev, near, far, image_size, k))
            except GeometryError as e:
                raise GeometryError(f"frame {k} (eye {ev.eye}): {e}") from None
    return out


def cameras_to_document(t: Trace, cams: list[EyeCamera]) -> CameraPathDocument:
    """Camera stream as a camera-path document; ``extra`` carries the projections."""
    views = list(t.views())
    records = []
    for ev, cam in zip(views, cams):
        c2w = rigid_inverse(cam.view)
        records.append(CameraRecord(cam.timestamp_ms, cam.eye, tuple(float(v) for v in c2w.reshape(16)),
                                    ev.fov.as_tuple()))
    extra = {
        "image_size": [cams[0].width, cams[0].height] if cams else None,
        "projections": [[float(v) for v in c.projection.reshape(16)] for c in cams],
    }
    return CameraPathDocument(t.scene_id, t.user_id, t.space, "source", tuple(records), extra)


def _forward(axis: str) -> tuple[float, float, float]:
    if axis == FORWARD_NEG_Z:
        return (0.0, 0.0, -1.0)
    if axis == FORWARD_POS_Z:
        return (0.0, 0.0, 1.0)
    raise ValueError(f"forward axis must be '-z' or '+z', got {axis!r}")


def gaze_direction(ev: EyeView, forward_axis: str = FORWARD_NEG_Z) -> tuple[float, float, float]:
    """Gaze ray direction expressed in the eye's own camera frame."""
    if ev.gaze_pose is None:
        raise GeometryError("row has no gaze data")
    d_world = quat_rotate(quat_normalize(ev.gaze_pose.orientation), _forward(forward_axis))
    d = quat_rotate(quat_inverse(quat_normalize(ev.eye_pose.orientation)), d_world)
    if math.sqrt(d[0] ** 2 + d[1] ** 2 + d[2] ** 2) < 1e-12:
        raise GeometryError("zero-length gaze direction")
    return tuple(d)


def gaze_pixel(ev: EyeView, image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE,
               forward_axis: str = FORWARD_NEG_Z) -> GazePixel:
    """Where the gaze ray crosses this eye's image.

    With ``-z`` the camera frame is x right, y up; with ``+z`` it is x right,
    y down. u and v are NaN when the ray is parallel to the image plane.
    """
    width, height = image_size
    dx, dy, dz = gaze_direction(ev, forward_axis)
    depth = -dz if forward_axis == FORWARD_NEG_Z else dz
    up = dy if forward_axis == FORWARD_NEG_Z else -dy
    if depth == 0.0:
        return GazePixel(math.nan, math.nan, False)
    h = dx / abs(depth)
    vt = up / abs(depth)
    l, r, t, b = fov_tangents(ev.fov)
    u = (h - l) / (r - l) * width
    v = (t - vt) / (t - b) * height
    in_view = depth > 0 and 0.0 <= u <= width and 0.0 <= v <= height
    return GazePixel(u, v, in_view)


def gaze_pixels(t: Trace, image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE,
                forward_axis: str = FORWARD_NEG_Z) -> list[tuple[int, int, float, GazePixel]]:
    """(frame index, eye, timestamp_ms, pixel) for every row, in file order."""
    if not t.has_gaze:
        raise GeometryError("trace has no gaze data")
    return [(k, ev.eye, ev.timestamp_ms, gaze_pixel(ev, image_size, forward_axis))
            for k, fr in enumerate(t.frames) for ev in fr.views()]
