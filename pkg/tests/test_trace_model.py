import math

import pytest

from navtrace.trace_model import (
    CoordinateSpace,
    Quat,
    SceneInit,
    TraceFormatError,
    UnknownSceneError,
    Vec3,
    ensure_valid,
    InvalidTraceError,
    scene_registry,
    validate_trace,
)

from conftest import make_frame, make_trace, make_view


SCENE_NAMES = ["truck", "treehill", "train", "stump", "room", "playroom", "drjohnson",
                "bicycle", "nyc", "london", "berlin", "alameda"]


def test_registry_has_exactly_the_twelve_scenes():
    reg = scene_registry()
    assert sorted(reg) == sorted(SCENE_NAMES)


def test_registry_truck_values():
    truck = scene_registry()["truck"]
    assert truck.q_table == (-0.0896, 0, 0, 0.9960)
    assert truck.scale == 0.76
    assert truck.init_pos == (0, 2.1, -4)


def test_registry_london_values():
    london = scene_registry()["london"]
    assert london.q_table == (0, 0, 0, 1)
    assert london.scale == 0.53
    assert london.init_pos == (18, 12, -11)


def test_unknown_scene_raises():
    with pytest.raises(UnknownSceneError):
        scene_registry()["garden"]


@pytest.mark.parametrize("name", SCENE_NAMES)
def test_registry_quaternions_unit_after_normalization(name):
    q = scene_registry()[name].q_init
    assert abs(q.norm_sq() - 1.0) < 1e-12


@pytest.mark.parametrize("name", SCENE_NAMES)
def test_printed_quaternion_norms(name):
    # Rounded to 4 decimals; every row but nyc lands within 1e-4 of unit norm.
    n2 = scene_registry()[name].q_table.norm_sq()
    if name == "nyc":
        assert n2 == pytest.approx(0.99971833, abs=1e-12)
    else:
        assert abs(n2 - 1.0) < 1e-4


def test_scene_init_rejects_bad_scale():
    with pytest.raises(ValueError):
        SceneInit("x", Quat(0, 0, 0, 1), 0.0, Vec3(0, 0, 0))
    with pytest.raises(ValueError):
        SceneInit("x", Quat(0, 0, 0, 2), 1.0, Vec3(0, 0, 0))


def test_canonical_sign():
    assert Quat(0, 0, 0, -1).canonical() == (0, 0, 0, 1)
    assert Quat(-1, 0, 0, 0).canonical() == (1, 0, 0, 0)
    assert Quat(0, -0.6, 0.8, 0).canonical() == (0, 0.6, -0.8, 0)
    assert Quat(0.1, 0.2, 0.3, 0.9).canonical() == (0.1, 0.2, 0.3, 0.9)


def test_empty_trace_rejected():
    with pytest.raises(TraceFormatError, match="no frames"):
        make_trace([])


class TestValidate:
    def test_sample_clean(self, sample_trace):
        report = validate_trace(sample_trace, strict=True)
        assert report.errors == []

    def test_eye_pattern_break(self):
        f = make_frame()
        bad = type(f)(f.left, make_view(0, (0.03, 0, 0)))
        report = validate_trace(make_trace([bad]))
        assert [str(e) for e in report.errors] == [
            "error: row 2: eye-index pairing broken at row 2 (expected 1, got 0)"]
        assert report.errors[0].row == 2

    def test_non_unit_quaternion(self):
        # 0.25 + 0.25 + 0.25 + 0.36 = 1.11
        f = make_frame(q=(0.5, 0.5, 0.5, 0.6))
        report = validate_trace(make_trace([f]))
        msgs = [e.message for e in report.errors]
        assert "non-unit quaternion (norm^2 = 1.11)" in msgs
        assert {e.row for e in report.errors if "non-unit quaternion" in e.message} == {1, 2}

    def test_timestamp_regression(self):
        frames = [make_frame(ts=0.0), make_frame(ts=20.0), make_frame(ts=10.0)]
        report = validate_trace(make_trace(frames))
        assert len(report.errors) == 1
        assert report.errors[0].row == 5
        assert "timestamp regression" in report.errors[0].message

    def test_head_quaternion_mismatch(self):
        f = make_frame()
        right = make_view(1, (0.03, 0, 0), q=(0, 0.0087265, 0, 0.9999619))
        report = validate_trace(make_trace([type(f)(f.left, right)]))
        assert any("head quaternion differs" in e.message and e.row == 2 for e in report.errors)

    def test_gaze_drift_is_warning(self):
        f = make_frame()
        left = make_view(0, (-0.03, 0, 0), gpos=(1.0, 0, 0))
        report = validate_trace(make_trace([type(f)(left, f.right)]))
        assert report.ok
        assert len(report.warnings) == 1 and report.warnings[0].row == 1
        assert validate_trace(make_trace([type(f)(left, f.right)]), gaze_drift=2.0).warnings == []

    def test_zero_ipd_warning(self):
        report = validate_trace(make_trace([make_frame(ipd=0.0)]))
        assert report.ok
        assert any("zero IPD" in w.message for w in report.warnings)

    def test_trailing_row_strict_vs_lenient(self):
        t = make_trace([make_frame()], trailing=make_view(0, ts=1.0))
        lenient = validate_trace(t, strict=False)
        assert lenient.ok and lenient.warnings[-1].row == 3
        strict = validate_trace(t, strict=True)
        assert strict.errors[-1].row == 3 and "odd row count" in strict.errors[-1].message

    def test_bad_fov(self):
        f = make_frame(fov=(0.5, -0.5, 0.7, -0.7))
        report = validate_trace(make_trace([f]))
        assert any("left" in e.message for e in report.errors)

    def test_space_mismatch(self):
        f = make_frame(space=CoordinateSpace.PHYSICAL_STAGE)
        report = validate_trace(make_trace([f], space=CoordinateSpace.VIRTUAL_WORLD))
        assert any("space" in e.message for e in report.errors)

    def test_ensure_valid_raises(self):
        with pytest.raises(InvalidTraceError):
            ensure_valid(make_trace([make_frame(q=(0.5, 0.5, 0.5, 0.6))]))
        t = make_trace([make_frame()])
        assert ensure_valid(t) is t


def test_frame_timestamp_is_left_row():
    f = make_frame(ts=5.0)
    assert f.timestamp_ms == 5.0
    assert math.isclose(f.right.timestamp_ms, 5.0)
