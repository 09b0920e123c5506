"""Quaternion, vector and 4x4 matrix algebra plus the scene-init transform.

Quaternions are Hamilton, stored (x, y, z, w). ``quat_mul(a, b)`` rotates by
``b`` first, then ``a``. Matrices are numpy float64 arrays, row-major, acting
on column vectors.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .trace_model import (
    CoordinateSpace,
    Frame,
    Pose,
    Quat,
    SceneInit,
    SpaceMismatchError,
    Trace,
    TraceError,
    Vec3,
)


class GeometryError(TraceError, ValueError):
    pass


IDENTITY_QUAT = Quat(0.0, 0.0, 0.0, 1.0)
X180 = Quat(1.0, 0.0, 0.0, 0.0)


def quat_normalize(q) -> Quat:
    x, y, z, w = q
    n = math.sqrt(x * x + y * y + z * z + w * w)
    if not n > 1e-12 or not math.isfinite(n):
        raise GeometryError(f"degenerate quaternion {tuple(q)}")
    return Quat(x / n, y / n, z / n, w / n)


def _mul_raw(a, b) -> Quat:
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return Quat(
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
        aw * bw - ax * bx - ay * by - az * bz,
    )


def quat_mul(a, b) -> Quat:
    """Hamilton product a*b, renormalized."""
    return quat_normalize(_mul_raw(a, b))


def quat_inverse(q) -> Quat:
    """Inverse of a unit quaternion (its conjugate)."""
    x, y, z, w = q
    return Quat(-x, -y, -z, w)


def quat_rotate(q, v) -> Vec3:
    """Rotate v by unit quaternion q (q v q^-1)."""
    qx, qy, qz, qw = q
    vx, vy, vz = v
    # t = 2 * (u x v); v' = v + w t + u x t
    tx = 2.0 * (qy * vz - qz * vy)
    ty = 2.0 * (qz * vx - qx * vz)
    tz = 2.0 * (qx * vy - qy * vx)
    return Vec3(
        vx + qw * tx + (qy * tz - qz * ty),
        vy + qw * ty + (qz * tx - qx * tz),
        vz + qw * tz + (qx * ty - qy * tx),
    )


def quat_angle_between(a, b) -> float:
    """Rotation angle (radians) taking a to b, sign-insensitive."""
    d = abs(sum(x * y for x, y in zip(quat_normalize(a), quat_normalize(b))))
    return 2.0 * math.acos(min(1.0, d))


def quat_from_axis_angle(axis, angle: float) -> Quat:
    ax = np.asarray(axis, dtype=float)
    ax = ax / np.linalg.norm(ax)
    s = math.sin(angle / 2.0)
    return Quat(float(ax[0] * s), float(ax[1] * s), float(ax[2] * s), math.cos(angle / 2.0))


def rotation_block(q) -> np.ndarray:
    x, y, z, w = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def quat_to_mat(q) -> np.ndarray:
    m = np.eye(4)
    m[:3, :3] = rotation_block(q)
    return m


def is_orthonormal(r: np.ndarray, tol: float = 1e-6) -> bool:
    r = np.asarray(r, dtype=float)
    return (np.all(np.isfinite(r))
            and np.allclose(r @ r.T, np.eye(3), atol=tol, rtol=0)
            and np.linalg.det(r) > 0)


def mat_to_quat(m) -> Quat:
    """Quaternion of the rotation block of a 3x3 or 4x4 matrix, canonical sign."""
    m = np.asarray(m, dtype=float)
    r = m[:3, :3]
    if not is_orthonormal(r):
        raise GeometryError("rotation block is not orthonormal")
    tr = r[0, 0] + r[1, 1] + r[2, 2]
    # Shepperd: branch on the largest of w, x, y, z for stability.
    if tr > max(r[0, 0], r[1, 1], r[2, 2]):
        s = 2.0 * math.sqrt(1.0 + tr)
        q = ((r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s, 0.25 * s)
    elif r[0, 0] >= r[1, 1] and r[0, 0] >= r[2, 2]:
        s = 2.0 * math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2])
        q = (0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s, (r[2, 1] - r[1, 2]) / s)
    elif r[1, 1] >= r[2, 2]:
        s = 2.0 * math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2])
        q = ((r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s, (r[0, 2] - r[2, 0]) / s)
    else:
        s = 2.0 * math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1])
        q = ((r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s, (r[1, 0] - r[0, 1]) / s)
    return quat_normalize(tuple(float(c) for c in q)).canonical()


def translation(v) -> np.ndarray:
    m = np.eye(4)
    m[:3, 3] = v
    return m


def pose_matrix(p: Pose) -> np.ndarray:
    """Camera-to-world transform translation(position) @ rotation(orientation)."""
    m = quat_to_mat(quat_normalize(p.orientation))
    m[:3, 3] = p.position
    return m


def rigid_inverse(m: np.ndarray) -> np.ndarray:
    r = m[:3, :3]
    out = np.eye(4)
    out[:3, :3] = r.T
    out[:3, 3] = -r.T @ m[:3, 3]
    return out


# --------------------------------------------------------------------------
# handedness

def _flip_sign(q: Quat) -> float:
    # Even in q, and negated by q -> X180*q, which makes the flip an exact involution.
    x, y, z, w = q
    for key in (abs(w) - abs(x), abs(y) - abs(z)):
        if key > 0:
            return 1.0
        if key < 0:
            return -1.0
    # sign of x*w, then y*z, without multiplying (products can underflow to 0)
    for a, b in ((x, w), (y, z)):
        if a != 0 and b != 0:
            return 1.0 if (a > 0) == (b > 0) else -1.0
    return 1.0


def flip_orientation(q) -> Quat:
    """X180 * q with a sign choice that makes applying it twice return q exactly."""
    x, y, z, w = q
    s = _flip_sign(Quat(x, y, z, w))
    # X180 * (x, y, z, w) == (w, -z, y, -x)
    return Quat(s * w, -s * z, s * y, -s * x)


def handedness_flip(p: Pose) -> Pose:
    """Re-express a pose across the 180-degree X rotation between +Y-up and +Y-down frames."""
    x, y, z = p.position
    return Pose(Vec3(x, -y, -z), flip_orientation(p.orientation), p.space)


FLIP_MATRIX = np.diag([1.0, -1.0, -1.0, 1.0])


def flip_conjugate(m: np.ndarray) -> np.ndarray:
    """F @ m @ F with F = diag(1, -1, -1, 1); exact, and its own inverse."""
    return FLIP_MATRIX @ np.asarray(m, dtype=float) @ FLIP_MATRIX


# --------------------------------------------------------------------------
# scene initialization

def effective_scale(init: SceneInit, reciprocal: bool = False) -> float:
    """Scene units per meter; ``reciprocal`` reads the table value as meters per unit."""
    return 1.0 / init.scale if reciprocal else init.scale


def apply_scene_init(p: Pose, init: SceneInit, *, reciprocal: bool = False) -> Pose:
    if p.space is not CoordinateSpace.PHYSICAL_STAGE:
        raise SpaceMismatchError(f"apply_scene_init expects a physical_stage pose, got {p.space.value}")
    s = effective_scale(init, reciprocal)
    pos = quat_rotate(init.q_init, p.position.scaled(s)) + init.init_pos
    # Unnormalized product: q_init is unit, so recorded |q| survives the round trip.
    return Pose(pos, _mul_raw(init.q_init, p.orientation), CoordinateSpace.VIRTUAL_WORLD)


def undo_scene_init(p: Pose, init: SceneInit, *, reciprocal: bool = False) -> Pose:
    if p.space is not CoordinateSpace.VIRTUAL_WORLD:
        raise SpaceMismatchError(f"undo_scene_init expects a virtual_world pose, got {p.space.value}")
    s = effective_scale(init, reciprocal)
    q_inv = quat_inverse(init.q_init)
    pos = quat_rotate(q_inv, p.position - init.init_pos).scaled(1.0 / s)
    return Pose(pos, _mul_raw(q_inv, p.orientation), CoordinateSpace.PHYSICAL_STAGE)


def scene_init_matrix(init: SceneInit, *, reciprocal: bool = False) -> np.ndarray:
    """Similarity transform stage -> virtual as one 4x4 matrix."""
    s = effective_scale(init, reciprocal)
    m = quat_to_mat(init.q_init)
    m[:3, :3] *= s
    m[:3, 3] = init.init_pos
    return m


# --------------------------------------------------------------------------
# frames

HEAD_TOLERANCE = 1e-6


def head_pose(f: Frame) -> Pose:
    """Midpoint of the two eye positions with the shared head orientation."""
    ql = f.left.eye_pose.orientation
    qr = f.right.eye_pose.orientation
    if any(abs(a - b) > HEAD_TOLERANCE for a, b in zip(ql, qr)):
        raise GeometryError("left/right head orientations differ")
    a = f.left.eye_pose.position
    b = f.right.eye_pose.position
    mid = Vec3((a.x + b.x) / 2.0, (a.y + b.y) / 2.0, (a.z + b.z) / 2.0)
    return Pose(mid, ql, f.left.eye_pose.space)


def ipd(f: Frame) -> float:
    return (f.left.eye_pose.position - f.right.eye_pose.position).norm()


# --------------------------------------------------------------------------
# whole traces

def map_trace_poses(t: Trace, fn, space: CoordinateSpace) -> Trace:
    """Apply ``fn`` to every eye and gaze pose; untouched fields keep their source text."""

    def view(ev):
        gaze = fn(ev.gaze_pose) if ev.gaze_pose is not None else None
        return replace(ev, eye_pose=fn(ev.eye_pose), gaze_pose=gaze)

    frames = tuple(Frame(view(f.left), view(f.right)) for f in t.frames)
    trailing = view(t.trailing) if t.trailing is not None else None
    return Trace(t.user_id, t.scene_id, frames, space, trailing)


def trace_to_stage(t: Trace, init: SceneInit, *, reciprocal: bool = False) -> Trace:
    return map_trace_poses(t, lambda p: undo_scene_init(p, init, reciprocal=reciprocal),
                           CoordinateSpace.PHYSICAL_STAGE)


def trace_to_virtual(t: Trace, init: SceneInit, *, reciprocal: bool = False) -> Trace:
    return map_trace_poses(t, lambda p: apply_scene_init(p, init, reciprocal=reciprocal),
                           CoordinateSpace.VIRTUAL_WORLD)


def flip_trace(t: Trace) -> Trace:
    return map_trace_poses(t, handedness_flip, t.space)
