import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from navtrace.geometry import (
    GeometryError,
    X180,
    apply_scene_init,
    handedness_flip,
    head_pose,
    ipd,
    mat_to_quat,
    pose_matrix,
    quat_mul,
    quat_normalize,
    quat_rotate,
    quat_to_mat,
    scene_init_matrix,
    undo_scene_init,
)
from navtrace.trace_model import (
    CoordinateSpace,
    Frame,
    Pose,
    Quat,
    SceneInit,
    SpaceMismatchError,
    Vec3,
    scene_registry,
)

from conftest import make_frame, make_view

STAGE = CoordinateSpace.PHYSICAL_STAGE
VIRTUAL = CoordinateSpace.VIRTUAL_WORLD
SAMPLE_HEAD_Q = (0.494687, 0.294258, 0.123821, 0.808310)

finite = st.floats(-1e3, 1e3, allow_nan=False)
unit_quats = st.tuples(*[st.floats(-1, 1, allow_nan=False)] * 4).filter(
    lambda q: sum(c * c for c in q) > 1e-3).map(quat_normalize)
vectors = st.tuples(finite, finite, finite).map(lambda v: Vec3(*v))


def close_up_to_sign(a, b, tol):
    a, b = np.asarray(a), np.asarray(b)
    return min(np.max(np.abs(a - b)), np.max(np.abs(a + b))) <= tol


class TestNormalize:
    def test_scaling(self):
        assert quat_normalize((0, 0, 0, 2)) == (0, 0, 0, 1)

    def test_truck(self):
        # 0.0896^2 + 0.9960^2 = 0.00802816 + 0.992016 = 1.00004416
        n = math.sqrt(1.00004416)
        q = quat_normalize((-0.0896, 0, 0, 0.9960))
        assert q.x == pytest.approx(-0.0896 / n, abs=1e-15)
        assert q.w == pytest.approx(0.9960 / n, abs=1e-15)
        assert abs(q.norm_sq() - 1) < 1e-12

    def test_degenerate(self):
        with pytest.raises(GeometryError, match="degenerate"):
            quat_normalize((0, 0, 0, 0))


class TestMul:
    def test_identity(self):
        q = quat_normalize((0.1, -0.2, 0.3, 0.9))
        assert np.allclose(quat_mul((0, 0, 0, 1), q), q, atol=1e-15)
        assert np.allclose(quat_mul(q, (0, 0, 0, 1)), q, atol=1e-15)

    def test_ij_is_k(self):
        assert quat_mul((1, 0, 0, 0), (0, 1, 0, 0)) == (0, 0, 1, 0)

    def test_truck_squared_against_matrix_product(self):
        truck = scene_registry()["truck"].q_init
        q2 = quat_mul(truck, truck)
        # scipy rotation composition: x-rotation by 20.5619... degrees
        expected = (-0.1784753185299337, 0.0, 0.0, 0.9839443890157811)
        assert np.allclose(q2, expected, atol=1e-12)
        r = quat_to_mat(truck)[:3, :3]
        assert np.allclose(quat_to_mat(q2)[:3, :3], r @ r, atol=1e-12)

    def test_order_b_first_then_a(self):
        a = quat_normalize((0.3, 0.1, -0.2, 0.9))
        b = quat_normalize((-0.5, 0.4, 0.1, 0.7))
        v = (0.3, -1.2, 2.0)
        assert np.allclose(quat_rotate(quat_mul(a, b), v), quat_rotate(a, quat_rotate(b, v)), atol=1e-12)

    @settings(max_examples=200)
    @given(unit_quats, unit_quats, unit_quats)
    def test_associative(self, a, b, c):
        assert np.allclose(quat_mul(quat_mul(a, b), c), quat_mul(a, quat_mul(b, c)), atol=1e-9)


class TestRotate:
    def test_identity(self):
        assert quat_rotate((0, 0, 0, 1), (1, 2, 3)) == (1, 2, 3)

    def test_x180(self):
        assert quat_rotate(X180, (0, 1, 0)) == (0, -1, 0)

    def test_truck_against_scipy(self):
        truck = scene_registry()["truck"].q_init
        expected = (0.0, 0.9839443890157809, -0.17847531852993367)
        assert np.allclose(quat_rotate(truck, (0, 1, 0)), expected, atol=1e-12)

    def test_norm_preserved_random(self):
        rng = np.random.default_rng(7)
        for _ in range(10_000):
            q = quat_normalize(rng.normal(size=4))
            v = rng.normal(size=3) * rng.uniform(0.01, 100)
            assert abs(Vec3(*quat_rotate(q, v)).norm() - np.linalg.norm(v)) < 1e-9


class TestMatrices:
    def test_identity(self):
        assert np.array_equal(quat_to_mat((0, 0, 0, 1)), np.eye(4))

    def test_x180_block(self):
        assert np.array_equal(quat_to_mat(X180)[:3, :3], np.diag([1.0, -1.0, -1.0]))

    def test_sample_round_trip(self):
        q = quat_normalize(SAMPLE_HEAD_Q)
        assert close_up_to_sign(mat_to_quat(quat_to_mat(q)), q, 1e-9)

    def test_against_scipy(self):
        q = quat_normalize(SAMPLE_HEAD_Q)
        assert np.allclose(quat_to_mat(q)[:3, :3], Rotation.from_quat(q).as_matrix(), atol=1e-12)

    def test_non_orthonormal_rejected(self):
        m = np.eye(4)
        m[0, 0] = 1.1
        with pytest.raises(GeometryError):
            mat_to_quat(m)

    def test_reflection_rejected(self):
        with pytest.raises(GeometryError):
            mat_to_quat(np.diag([1.0, 1.0, -1.0, 1.0]))

    @settings(max_examples=300)
    @given(unit_quats)
    def test_round_trip_property(self, q):
        back = mat_to_quat(quat_to_mat(q))
        assert close_up_to_sign(back, q, 1e-9)
        assert back.w >= 0


class TestHandedness:
    def test_identity_pose(self):
        p = handedness_flip(Pose(Vec3(0, 0, 0), Quat(0, 0, 0, 1)))
        assert p.position == (0, 0, 0)
        assert p.orientation == (1, 0, 0, 0)

    def test_flips_y_axis(self):
        p = handedness_flip(Pose(Vec3(0, 1, 0), Quat(0, 0, 0, 1)))
        assert p.position == (0, -1, 0)

    def test_sample_left_eye(self):
        p = Pose(Vec3(-3.66908, -3.65709, 4.65788), Quat(*SAMPLE_HEAD_Q))
        f = handedness_flip(p)
        assert f.position == (-3.66908, 3.65709, -4.65788)
        assert close_up_to_sign(f.orientation, quat_mul(X180, SAMPLE_HEAD_Q), 1e-6)
        # scipy: X180 composed with the head rotation
        expected = (-0.8083101233990578, 0.12382101890288966, -0.2942580449223194, 0.4946870755204188)
        assert close_up_to_sign(quat_normalize(f.orientation), expected, 1e-12)

    @settings(max_examples=500)
    @given(vectors, st.tuples(*[st.floats(-1, 1, allow_nan=False)] * 4))
    def test_involution_exact(self, v, q):
        p = Pose(v, Quat(*q))
        assert handedness_flip(handedness_flip(p)) == p

    @pytest.mark.parametrize("q", [(0.5, 0.5, 0.5, 0.5), (0.5, -0.5, 0.5, -0.5), (0, 0.6, 0.6, 0),
                                   (0.7071, 0, 0, 0.7071), (0, 0, 1, 0), (1, 0, 0, 0)])
    def test_involution_ties(self, q):
        p = Pose(Vec3(1, 2, 3), Quat(*q))
        assert handedness_flip(handedness_flip(p)) == p

    def test_same_rotation_as_x180_product(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            q = quat_normalize(rng.normal(size=4))
            f = handedness_flip(Pose(Vec3(0, 0, 0), q)).orientation
            assert close_up_to_sign(f, quat_mul(X180, q), 1e-12)


def _random_stage_pose(rng):
    return Pose(Vec3(*rng.uniform(-1.5, 1.5, 3)), quat_normalize(rng.normal(size=4)), STAGE)


class TestSceneInit:
    def test_london_origin(self):
        london = scene_registry()["london"]
        p = apply_scene_init(Pose(Vec3(0, 0, 0), Quat(0, 0, 0, 1), STAGE), london)
        assert p.position == (18, 12, -11)
        assert p.orientation == (0, 0, 0, 1)
        assert p.space is VIRTUAL

    def test_london_unit_x(self):
        london = scene_registry()["london"]
        p = apply_scene_init(Pose(Vec3(1, 0, 0), Quat(0, 0, 0, 1), STAGE), london)
        assert np.allclose(p.position, (18.53, 12, -11), atol=1e-12)
        m = scene_init_matrix(london)
        assert np.allclose((m @ [1, 0, 0, 1])[:3], (18.53, 12, -11), atol=1e-12)

    def test_truck_origin(self):
        truck = scene_registry()["truck"]
        p = apply_scene_init(Pose(Vec3(0, 0, 0), Quat(0, 0, 0, 1), STAGE), truck)
        assert p.position == (0, 2.1, -4)
        assert np.allclose(p.orientation, truck.q_init, atol=1e-15)

    def test_undo_truck(self):
        truck = scene_registry()["truck"]
        p = undo_scene_init(Pose(Vec3(0, 2.1, -4), Quat(0, 0, 0, 1), VIRTUAL), truck)
        assert np.allclose(p.position, (0, 0, 0), atol=1e-12)
        assert p.space is STAGE

    def test_undo_london(self):
        london = scene_registry()["london"]
        p = undo_scene_init(Pose(Vec3(18.53, 12, -11), Quat(0, 0, 0, 1), VIRTUAL), london)
        assert np.allclose(p.position, (1, 0, 0), atol=1e-12)

    def test_space_mismatch(self):
        truck = scene_registry()["truck"]
        with pytest.raises(SpaceMismatchError):
            apply_scene_init(Pose(Vec3(0, 0, 0), Quat(0, 0, 0, 1), VIRTUAL), truck)
        with pytest.raises(SpaceMismatchError):
            undo_scene_init(Pose(Vec3(0, 0, 0), Quat(0, 0, 0, 1), STAGE), truck)

    @pytest.mark.parametrize("reciprocal", [False, True])
    @pytest.mark.parametrize("name", sorted(scene_registry()))
    def test_inverse_property(self, name, reciprocal):
        init = scene_registry()[name]
        rng = np.random.default_rng(hash(name) % 2**32)
        for _ in range(200):
            p = _random_stage_pose(rng)
            back = undo_scene_init(apply_scene_init(p, init, reciprocal=reciprocal), init, reciprocal=reciprocal)
            assert np.max(np.abs(np.subtract(back.position, p.position))) < 1e-9
            assert close_up_to_sign(back.orientation, p.orientation, 1e-9)

    def test_matches_matrix_oracle(self):
        # independent path: scipy rotation matrices and an explicit T @ R @ S product
        rng = np.random.default_rng(11)
        for name in scene_registry():
            init = scene_registry()[name]
            r_init = Rotation.from_quat(init.q_table).as_matrix()
            oracle = np.eye(4)
            oracle[:3, :3] = init.scale * r_init
            oracle[:3, 3] = init.init_pos
            for _ in range(50):
                p = _random_stage_pose(rng)
                pm = np.eye(4)
                pm[:3, :3] = Rotation.from_quat(p.orientation).as_matrix()
                pm[:3, 3] = p.position
                expected = oracle @ pm
                got = apply_scene_init(p, init)
                assert np.allclose(got.position, expected[:3, 3], atol=1e-9, rtol=0)
                assert np.allclose(quat_to_mat(got.orientation)[:3, :3], expected[:3, :3] / init.scale,
                                   atol=1e-9, rtol=0)

    def test_ipd_scales_by_scene_scale(self):
        for name in scene_registry():
            init = scene_registry()[name]
            f = make_frame(ipd=0.063, center=(0.3, 1.6, -0.2), space=STAGE)
            moved = Frame(*(
                type(ev)(ev.eye, ev.fov, apply_scene_init(ev.eye_pose, init), None, ev.timestamp_ms)
                for ev in f.views()))
            assert ipd(moved) == pytest.approx(init.scale * 0.063, rel=1e-12)


class TestFrames:
    def test_sample_head_midpoint(self, sample_trace):
        h = head_pose(sample_trace.frames[0])
        assert np.allclose(h.position, (-3.59083, -3.608805, 4.623165), atol=1e-12)
        assert h.orientation == SAMPLE_HEAD_Q

    def test_symmetric_eyes(self):
        f = make_frame(ipd=0.063)
        assert np.allclose(head_pose(f).position, (0, 0, 0), atol=1e-15)
        assert ipd(f) == pytest.approx(0.063, abs=1e-15)

    def test_mismatched_quats(self):
        f = make_frame()
        bad = Frame(f.left, make_view(1, (0.03, 0, 0), q=(0, 0.1, 0, 0.99498744)))
        with pytest.raises(GeometryError):
            head_pose(bad)

    def test_sample_ipd(self, sample_trace):
        assert ipd(sample_trace.frames[0]) == pytest.approx(0.19657, abs=5e-6)

    def test_zero_ipd(self):
        assert ipd(make_frame(ipd=0.0)) == 0.0


def test_pose_matrix_layout():
    p = Pose(Vec3(1, 2, 3), quat_normalize(SAMPLE_HEAD_Q))
    m = pose_matrix(p)
    assert np.array_equal(m[3], [0, 0, 0, 1])
    assert np.array_equal(m[:3, 3], [1, 2, 3])
