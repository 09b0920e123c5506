"""Deterministic synthetic traces with analytically known motion.

Useful as ground truth: a circle of radius r walked for n revolutions has
path length 2*pi*r*n, stage-space IPD is fixed, and every emitted row passes
validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import apply_scene_init, quat_from_axis_angle, quat_mul, quat_rotate
from .trace_model import (
    CoordinateSpace,
    EyeView,
    FovAngles,
    Frame,
    Pose,
    Quat,
    SceneInit,
    Trace,
    Vec3,
)

# FOV of the sample rows printed with the dataset description.
LEFT_FOV = FovAngles(-0.942478, 0.698132, -0.942478, 0.733038)
RIGHT_FOV = FovAngles(-0.698132, 0.942478, -0.942478, 0.733038)


@dataclass(frozen=True)
class Circle:
    radius: float = 1.0
    revolutions: float = 1.0
    center: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class Line:
    start: tuple[float, float] = (0.0, 0.0)
    end: tuple[float, float] = (1.0, 0.0)


@dataclass(frozen=True)
class Stationary:
    position: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class ConstantHeight:
    height: float = 1.6


@dataclass(frozen=True)
class SinusoidHeight:
    mean: float = 1.6
    amplitude: float = 0.05
    period_s: float = 2.0


@dataclass(frozen=True)
class MotionSpec:
    duration_s: float = 10.0
    fps: float = 60.0
    path: Circle | Line | Stationary = field(default_factory=Stationary)
    height: ConstantHeight | SinusoidHeight = field(default_factory=ConstantHeight)
    ipd_m: float = 0.063
    gaze_yaw_deg: float = 0.0
    gaze_pitch_deg: float = 0.0
    # Random per-frame gaze wobble (degrees, std-dev); 0 disables the RNG entirely.
    gaze_jitter_deg: float = 0.0
    seed: int = 0
    user_id: str = "user0"

    def validate(self) -> None:
        if not (self.fps > 0 and math.isfinite(self.fps)):
            raise ValueError(f"fps must be positive, got {self.fps}")
        if not self.duration_s > 0:
            raise ValueError(f"duration must be positive, got {self.duration_s}")
        if not self.ipd_m > 0:
            raise ValueError(f"IPD must be positive, got {self.ipd_m}")
        if isinstance(self.path, Circle) and self.path.radius < 0:
            raise ValueError("circle radius must be >= 0")
        if self.gaze_jitter_deg < 0:
            raise ValueError("gaze jitter must be >= 0")

    @property
    def n_frames(self) -> int:
        return max(1, int(round(self.duration_s * self.fps)))


def _horizontal(path, s: float) -> tuple[float, float, float, float]:
    """(x, z, dx/ds, dz/ds) at normalized time s in [0, 1]."""
    if isinstance(path, Circle):
        a = 2.0 * math.pi * path.revolutions * s
        w = 2.0 * math.pi * path.revolutions
        cx, cz = path.center
        r = path.radius
        return cx + r * math.cos(a), cz + r * math.sin(a), -r * w * math.sin(a), r * w * math.cos(a)
    if isinstance(path, Line):
        (x0, z0), (x1, z1) = path.start, path.end
        return x0 + (x1 - x0) * s, z0 + (z1 - z0) * s, x1 - x0, z1 - z0
    x, z = path.position
    return x, z, 0.0, 0.0


def _height(profile, t: float) -> float:
    if isinstance(profile, SinusoidHeight):
        return profile.mean + profile.amplitude * math.sin(2.0 * math.pi * t / profile.period_s)
    return profile.height


def _facing(vx: float, vz: float) -> Quat:
    """Yaw-only orientation whose -Z axis points along (vx, 0, vz)."""
    if vx == 0.0 and vz == 0.0:
        return Quat(0.0, 0.0, 0.0, 1.0)
    yaw = math.atan2(-vx, -vz)
    return Quat(0.0, math.sin(yaw / 2.0), 0.0, math.cos(yaw / 2.0))


def stage_head_position(spec: MotionSpec, k: int) -> Vec3:
    t = k / spec.fps
    x, z, _, _ = _horizontal(spec.path, t / spec.duration_s)
    return Vec3(x, _height(spec.height, t), z)


def generate_trace(spec: MotionSpec, init: SceneInit | None = None) -> Trace:
    """Sample ``spec`` at ``fps`` for ``duration_s``.

    Without ``init`` the trace stays in physical-stage space; with one, every
    pose goes through the scene-init transform and the trace is virtual-world.
    Emitted quaternions use the w >= 0 sign.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed) if spec.gaze_jitter_deg > 0 else None
    base_offset = quat_mul(quat_from_axis_angle((0, 1, 0), math.radians(spec.gaze_yaw_deg)),
                           quat_from_axis_angle((1, 0, 0), math.radians(spec.gaze_pitch_deg)))
    frames = []
    half = spec.ipd_m / 2.0
    for k in range(spec.n_frames):
        t = k / spec.fps
        x, z, vx, vz = _horizontal(spec.path, t / spec.duration_s)
        head = Vec3(x, _height(spec.height, t), z)
        q = _facing(vx, vz)
        right = quat_rotate(q, (1.0, 0.0, 0.0))
        offset = base_offset
        if rng is not None:
            yaw, pitch = rng.normal(0.0, spec.gaze_jitter_deg, size=2)
            offset = quat_mul(offset, quat_mul(quat_from_axis_angle((0, 1, 0), math.radians(yaw)),
                                               quat_from_axis_angle((1, 0, 0), math.radians(pitch))))
        gq = quat_mul(q, offset)
        ts = k * 1000.0 / spec.fps
        views = []
        for eye, sign, fov in ((0, -1.0, LEFT_FOV), (1, 1.0, RIGHT_FOV)):
            pos = head + right.scaled(sign * half)
            eye_pose = Pose(pos, q, CoordinateSpace.PHYSICAL_STAGE)
            gaze_pose = Pose(pos, gq, CoordinateSpace.PHYSICAL_STAGE)
            if init is not None:
                eye_pose = apply_scene_init(eye_pose, init)
                gaze_pose = apply_scene_init(gaze_pose, init)
            eye_pose = Pose(eye_pose.position, eye_pose.orientation.canonical(), eye_pose.space)
            gaze_pose = Pose(gaze_pose.position, gaze_pose.orientation.canonical(), gaze_pose.space)
            views.append(EyeView(eye, fov, eye_pose, gaze_pose, ts))
        frames.append(Frame(*views))
    space = CoordinateSpace.VIRTUAL_WORLD if init is not None else CoordinateSpace.PHYSICAL_STAGE
    scene_id = init.name if init is not None else "synthetic"
    return Trace(spec.user_id, scene_id, tuple(frames), space)
