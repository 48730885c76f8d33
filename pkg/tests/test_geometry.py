"""Pose and unit-vector arithmetic."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lamp.geometry import (
    DegenerateVectorError,
    DimensionMismatchError,
    Pose,
    cosine_sim,
    normalize,
    perturb_pose,
    pose_distance,
    quat_abs_dot,
    quat_mul,
    yaw_quat,
)


def test_normalize_unit_norm():
    v = normalize([3.0, 4.0])
    # [TRIVIAL] 3-4-5 triangle
    assert np.allclose(v, [0.6, 0.8])
    assert np.isclose(np.linalg.norm(v), 1.0)


def test_normalize_zero_raises():
    with pytest.raises(DegenerateVectorError):
        normalize(np.zeros(5))


def test_normalize_nonfinite_raises():
    with pytest.raises(DegenerateVectorError):
        normalize([np.inf, 1.0])


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=16))
def test_normalize_property(vals):
    v = np.asarray(vals)
    if np.linalg.norm(v) == 0:
        with pytest.raises(DegenerateVectorError):
            normalize(v)
    else:
        assert np.isclose(np.linalg.norm(normalize(v)), 1.0)


def test_cosine_sim_bounds_and_mismatch():
    a = normalize(np.arange(1.0, 9.0))
    assert np.isclose(cosine_sim(a, a), 1.0)
    assert np.isclose(cosine_sim(a, -a), -1.0)
    with pytest.raises(DimensionMismatchError):
        cosine_sim(np.ones(3), np.ones(4))


def test_pose_rejects_non_unit_quaternion():
    with pytest.raises(ValueError):
        Pose(t=np.zeros(3), q=np.array([1.0, 1.0, 0.0, 0.0]))


def test_pose_accepts_f32_rounded_quaternion():
    # save/load quantizes to f32; that rounding must stay within tolerance
    q = normalize(np.array([0.3, -0.4, 0.5, 0.6]))
    q32 = q.astype(np.float32).astype(np.float64)
    Pose(t=np.zeros(3), q=q32)  # must not raise


def test_pose_is_immutable():
    p = Pose(t=np.zeros(3), q=np.array([1.0, 0.0, 0.0, 0.0]))
    with pytest.raises(ValueError):
        p.t[0] = 5.0


def test_as_vector_order():
    p = Pose(t=np.array([1.0, 2.0, 3.0]), q=np.array([1.0, 0.0, 0.0, 0.0]))
    # [TRIVIAL] position first, quaternion (w, x, y, z) second
    assert np.array_equal(p.as_vector(), [1, 2, 3, 1, 0, 0, 0])


def test_from_vector_roundtrip():
    v = np.array([0.5, -2.0, 0.0, 0.0, 0.0, 0.0, 1.0])
    p = Pose.from_vector(v)
    assert np.allclose(p.as_vector(), v)


def test_forward_axis_identity_and_yaw():
    ident = Pose(t=np.zeros(3), q=np.array([1.0, 0.0, 0.0, 0.0]))
    # [TRIVIAL] identity rotation looks along +x
    assert np.allclose(ident.forward_axis(), [1.0, 0.0, 0.0])
    quarter = Pose(t=np.zeros(3), q=yaw_quat(np.pi / 2))
    # [DERIVED] 90 degree yaw about +z maps +x to +y
    assert np.allclose(quarter.forward_axis(), [0.0, 1.0, 0.0], atol=1e-12)


@given(st.floats(-10.0, 10.0))
def test_yaw_quat_unit_and_forward(yaw):
    q = yaw_quat(yaw)
    assert np.isclose(np.linalg.norm(q), 1.0)
    fwd = Pose(t=np.zeros(3), q=q).forward_axis()
    # [DERIVED] forward axis of a yaw rotation is (cos yaw, sin yaw, 0)
    assert np.allclose(fwd, [np.cos(yaw), np.sin(yaw), 0.0], atol=1e-12)


def test_quat_mul_identity():
    e = np.array([1.0, 0.0, 0.0, 0.0])
    q = normalize(np.array([0.1, 0.2, -0.3, 0.9]))
    assert np.allclose(quat_mul(e, q), q)
    assert np.allclose(quat_mul(q, e), q)


def test_quat_mul_composes_yaws():
    # [DERIVED] yaw quaternions compose additively
    a, b = 0.7, -1.9
    assert np.allclose(quat_mul(yaw_quat(a), yaw_quat(b)), yaw_quat(a + b))


def test_quat_abs_dot_sign_invariance():
    q = normalize(np.array([0.3, 0.1, -0.2, 0.5]))
    assert np.isclose(quat_abs_dot(q, -q), 1.0)
    assert quat_abs_dot(q, q) <= 1.0


def test_pose_distance_ignores_orientation():
    a = Pose(t=np.array([0.0, 0.0, 0.0]), q=yaw_quat(0.0))
    b = Pose(t=np.array([3.0, 4.0, 0.0]), q=yaw_quat(2.0))
    assert np.isclose(pose_distance(a, b), 5.0)


def test_perturb_pose_stays_on_ground_plane():
    rng = np.random.default_rng(0)
    base = Pose(t=np.array([1.0, 2.0, 0.5]), q=yaw_quat(0.3))
    for _ in range(50):
        p = perturb_pose(base, 5.0, np.pi, rng)
        assert p.t[2] == base.t[2]
        assert np.isclose(np.linalg.norm(p.q), 1.0)


def test_perturb_pose_zero_sigma_is_identity():
    rng = np.random.default_rng(1)
    base = Pose(t=np.array([1.0, 2.0, 0.0]), q=yaw_quat(1.0))
    p = perturb_pose(base, 0.0, 0.0, rng)
    assert np.allclose(p.t, base.t)
    assert quat_abs_dot(p.q, base.q) > 1.0 - 1e-12


def test_perturb_pose_negative_sigma_raises():
    rng = np.random.default_rng(2)
    base = Pose(t=np.zeros(3), q=yaw_quat(0.0))
    with pytest.raises(ValueError):
        perturb_pose(base, -1.0, 0.0, rng)


@settings(max_examples=25)
@given(st.integers(0, 10_000))
def test_perturb_pose_deterministic_given_rng_seed(seed):
    base = Pose(t=np.zeros(3), q=yaw_quat(0.0))
    p1 = perturb_pose(base, 2.0, 1.0, np.random.default_rng(seed))
    p2 = perturb_pose(base, 2.0, 1.0, np.random.default_rng(seed))
    assert np.array_equal(p1.as_vector(), p2.as_vector())
