"""Toolkit for 6-DoF head-pose / eye-gaze navigation traces recorded over 3DGS scenes."""

from .trace_model import (
    CoordinateSpace,
    EyeView,
    FovAngles,
    Frame,
    Pose,
    Quat,
    SceneInit,
    SceneRegistry,
    Trace,
    TraceError,
    TraceFormatError,
    UnitQuat,
    UnknownSceneError,
    ValidationReport,
    Vec3,
    scene_registry,
    validate_trace,
)
from .io_formats import csv_to_json, json_to_csv, parse_trace_csv, read_trace, scan_dataset, write_trace_csv

__version__ = "0.1.0"
