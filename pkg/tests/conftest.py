import math

import pytest

from navtrace.trace_model import (
    CoordinateSpace,
    EyeView,
    FovAngles,
    Frame,
    Pose,
    Quat,
    Trace,
    Vec3,
)

# The four published sample rows, in their printed column order (gaze quaternion
# before gaze position). The sample omits timestamps; the last column here is
# fixture data so the snippet forms a complete trace.
SAMPLE_HEADER = ("ViewIndex,FOV1,FOV2,FOV3,FOV4,Pos_X,Pos_Y,Pos_Z,Quat_X,Quat_Y,Quat_Z,Quat_W,"
                 "GazeQ_X,GazeQ_Y,GazeQ_Z,GazeQ_W,GazePos_X,GazePos_Y,GazePos_Z,Timestamp")
SAMPLE_ROWS = [
    "0,-0.942478,0.698132,-0.942478,0.733038,-3.66908,-3.65709,4.65788,0.494687,0.294258,0.123821,0.808310,"
    "0.250753,0.0845578,0.0237413,0.964059,-3.66845,-3.65671,4.65700",
    "1,-0.698132,0.942478,-0.942478,0.733038,-3.51258,-3.56052,4.58845,0.494687,0.294258,0.123821,0.808310,"
    "0.245048,0.1037840,0.0453922,0.962871,-3.51320,-3.56090,4.58873",
    "0,-0.942478,0.698132,-0.942478,0.733038,-3.66901,-3.65635,4.65733,0.494082,0.293893,0.122980,0.808941,"
    "0.248543,0.0871354,0.0263629,0.964333,-3.66845,-3.65617,4.65724",
    "1,-0.698132,0.942478,-0.942478,0.733038,-3.51234,-3.56015,4.58775,0.494082,0.293893,0.122980,0.808941,"
    "0.242903,0.1064400,0.0481759,0.962989,-3.51307,-3.56065,4.58826",
]
SAMPLE_TIMESTAMPS = ["0", "0", "13.9", "13.9"]
SAMPLE_CSV = SAMPLE_HEADER + "\n" + "\n".join(
    f"{r},{ts}" for r, ts in zip(SAMPLE_ROWS, SAMPLE_TIMESTAMPS)) + "\n"

SAMPLE_LEFT_FOV = (-0.942478, 0.698132, -0.942478, 0.733038)


@pytest.fixture
def sample_csv():
    return SAMPLE_CSV


@pytest.fixture
def sample_trace():
    from navtrace.io_formats import parse_trace_csv
    return parse_trace_csv(SAMPLE_CSV, "user1", "unknown")


def make_view(eye, pos=(0.0, 0.0, 0.0), q=(0.0, 0.0, 0.0, 1.0), gq=None, ts=0.0,
              fov=(-0.8, 0.8, 0.7, -0.7), space=CoordinateSpace.VIRTUAL_WORLD, gpos=None):
    gq = q if gq is None else gq
    gpos = pos if gpos is None else gpos
    return EyeView(eye, FovAngles(*fov), Pose(Vec3(*pos), Quat(*q), space),
                   Pose(Vec3(*gpos), Quat(*gq), space), ts)


def make_frame(ipd=0.063, center=(0.0, 0.0, 0.0), q=(0.0, 0.0, 0.0, 1.0), ts=0.0, **kw):
    cx, cy, cz = center
    h = ipd / 2
    return Frame(make_view(0, (cx - h, cy, cz), q, ts=ts, **kw), make_view(1, (cx + h, cy, cz), q, ts=ts, **kw))


def make_trace(frames, space=CoordinateSpace.VIRTUAL_WORLD, scene="synthetic", trailing=None):
    return Trace("user1", scene, tuple(frames), space, trailing)


def yaw_quat(deg):
    a = math.radians(deg) / 2
    return (0.0, math.sin(a), 0.0, math.cos(a))


# Acceptance criteria record one verdict line each; they are echoed after the run.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
