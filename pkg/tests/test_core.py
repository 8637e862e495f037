import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmreg import (
    InvalidInputError,
    PointCloud,
    Pose,
    apply,
    compose,
    inverse,
    pose_from_matrix,
    rotation_matrix,
)
from mmreg.core import check_rigid_transform, rotation_matrix_partials

# --- quaternion oracle -------------------------------------------------------
# Independent construction of Rz(yaw) Ry(pitch) Rx(roll) by composing unit
# quaternions (Hamilton convention) and converting the product to a matrix.


def _axis_quat(axis: int, angle: float) -> np.ndarray:
    q = np.zeros(4)
    q[0] = math.cos(angle / 2.0)
    q[1 + axis] = math.sin(angle / 2.0)
    return q


def _quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def _quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def _quat_oracle(yaw: float, pitch: float, roll: float) -> np.ndarray:
    q = _quat_mul(_axis_quat(2, yaw), _quat_mul(_axis_quat(1, pitch), _axis_quat(0, roll)))
    return _quat_to_matrix(q)


angles = st.floats(-math.pi, math.pi, allow_nan=False)
lengths = st.floats(-10.0, 10.0, allow_nan=False)
poses = st.builds(Pose, angles, angles, angles, lengths, lengths, lengths)


def random_cloud(rng: np.random.Generator, n: int = 20) -> PointCloud:
    return PointCloud(rng.normal(size=(n, 3)))


# --- rotation_matrix ---------------------------------------------------------

def test_rotation_zero_angles_is_identity():
    assert np.array_equal(rotation_matrix(Pose(0, 0, 0, 1, 2, 3)), np.eye(3))


def test_rotation_half_turn_about_z():
    R = rotation_matrix(Pose(yaw=math.pi))
    assert np.allclose(R, np.diag([-1.0, -1.0, 1.0]), atol=1e-15)


def test_rotation_matches_quaternion_oracle():
    R = rotation_matrix(Pose(0.3, -0.2, 0.1))
    assert np.max(np.abs(R - _quat_oracle(0.3, -0.2, 0.1))) < 1e-15
    assert np.max(np.abs(R.T @ R - np.eye(3))) < 1e-15


@settings(max_examples=60, deadline=None)
@given(poses)
def test_rotation_orthogonal_det_plus_one(pose):
    R = rotation_matrix(pose)
    assert np.max(np.abs(R.T @ R - np.eye(3))) < 1e-12
    assert abs(np.linalg.det(R) - 1.0) < 1e-12


@settings(max_examples=30, deadline=None)
@given(poses)
def test_rotation_matches_oracle_everywhere(pose):
    R = rotation_matrix(pose)
    assert np.max(np.abs(R - _quat_oracle(pose.yaw, pose.pitch, pose.roll))) < 1e-13


def test_rotation_partials_match_finite_differences():
    pose = Pose(0.4, -0.7, 1.1)
    partials = rotation_matrix_partials(pose)
    h = 1e-7
    for i, name in enumerate(("yaw", "pitch", "roll")):
        plus = rotation_matrix(Pose(**{**pose.__dict__, name: getattr(pose, name) + h}))
        minus = rotation_matrix(Pose(**{**pose.__dict__, name: getattr(pose, name) - h}))
        assert np.max(np.abs(partials[i] - (plus - minus) / (2 * h))) < 1e-8


# --- apply -------------------------------------------------------------------

def test_apply_identity_is_noop():
    rng = np.random.default_rng(0)
    cloud = random_cloud(rng)
    out = apply(Pose.identity(), cloud)
    assert np.array_equal(out.points, cloud.points)


def test_apply_pure_translation():
    out = apply(Pose(0, 0, 0, 1, 2, 3), PointCloud([[0.0, 0.0, 0.0]]))
    assert np.array_equal(out.points, [[1.0, 2.0, 3.0]])


def test_apply_then_inverse_restores_cloud():
    rng = np.random.default_rng(1)
    cloud = random_cloud(rng, 50)
    pose = Pose(0.9, -0.4, 0.2, 0.3, -1.0, 2.0)
    back = pose_from_matrix(inverse(pose.to_matrix()))
    out = apply(back, apply(pose, cloud))
    assert np.max(np.abs(out.points - cloud.points)) < 1e-12


def test_apply_preserves_order_and_size():
    rng = np.random.default_rng(2)
    cloud = random_cloud(rng, 7)
    pose = Pose(0.1, 0.2, 0.3, 1, 1, 1)
    out = apply(pose, cloud)
    assert len(out) == 7
    R, t = rotation_matrix(pose), pose.translation()
    assert np.allclose(out.points[3], R @ cloud.points[3] + t, atol=1e-14)


def test_apply_empty_cloud_raises():
    with pytest.raises(InvalidInputError):
        apply(Pose.identity(), PointCloud(np.empty((0, 3))))


# --- compose / inverse -------------------------------------------------------

def test_compose_with_identity():
    T = Pose(0.3, 0.1, -0.2, 1, 2, 3).to_matrix()
    assert np.array_equal(compose(T, np.eye(4)), T)
    assert np.array_equal(compose(np.eye(4), T), T)


def test_compose_with_inverse_is_identity():
    T = Pose(0.5, -0.3, 0.8, -2, 1, 4).to_matrix()
    assert np.max(np.abs(compose(T, inverse(T)) - np.eye(4))) < 1e-12


def test_compose_matches_point_action():
    rng = np.random.default_rng(3)
    a = Pose(0.2, 0.4, -0.6, 1, -1, 0.5)
    b = Pose(-0.8, 0.1, 0.3, 0.2, 2, -1)
    cloud = random_cloud(rng, 30)
    via_compose = pose_from_matrix(compose(a.to_matrix(), b.to_matrix()))
    lhs = apply(via_compose, cloud)
    rhs = apply(a, apply(b, cloud))
    assert np.max(np.abs(lhs.points - rhs.points)) < 1e-10


@settings(max_examples=30, deadline=None)
@given(poses, poses)
def test_group_action_property(a, b):
    rng = np.random.default_rng(4)
    cloud = random_cloud(rng, 10)
    composed = pose_from_matrix(compose(a.to_matrix(), b.to_matrix()))
    lhs = apply(composed, cloud)
    rhs = apply(a, apply(b, cloud))
    assert np.max(np.abs(lhs.points - rhs.points)) < 1e-10


def test_inverse_identity():
    assert np.array_equal(inverse(np.eye(4)), np.eye(4))


def test_inverse_pure_translation():
    T = Pose(0, 0, 0, 1, 2, 3).to_matrix()
    assert np.allclose(inverse(T), Pose(0, 0, 0, -1, -2, -3).to_matrix(), atol=1e-15)


def test_inverse_matches_numeric_inverse():
    T = Pose(1.1, -0.6, 0.4, 3, -2, 1).to_matrix()
    assert np.max(np.abs(inverse(T) - np.linalg.inv(T))) < 1e-10


# --- pose <-> matrix round trips --------------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.floats(-math.pi, math.pi), st.floats(-1.4, 1.4), st.floats(-math.pi, math.pi),
       lengths, lengths, lengths)
def test_pose_matrix_roundtrip_away_from_lock(yaw, pitch, roll, tx, ty, tz):
    pose = Pose(yaw, pitch, roll, tx, ty, tz)
    back = pose_from_matrix(pose.to_matrix())
    # Angles can differ by 2*pi aliasing at the [-pi, pi] boundary; compare
    # the rotations and translations instead of raw angles.
    assert np.max(np.abs(rotation_matrix(back) - rotation_matrix(pose))) < 1e-9
    assert np.max(np.abs(back.translation() - pose.translation())) < 1e-12


def test_pose_matrix_roundtrip_recovers_angles():
    pose = Pose(0.7, -0.9, 1.2, 0.1, 0.2, 0.3)
    back = pose_from_matrix(pose.to_matrix())
    assert np.max(np.abs(back.as_vector() - pose.as_vector())) < 1e-9


def test_gimbal_lock_folds_roll_into_yaw():
    pose = Pose(yaw=0.4, pitch=math.pi / 2, roll=-0.3)
    back = pose_from_matrix(pose.to_matrix())
    assert back.roll == 0.0
    assert np.max(np.abs(rotation_matrix(back) - rotation_matrix(pose))) < 1e-9


def test_gimbal_lock_negative_pitch():
    pose = Pose(yaw=-1.0, pitch=-math.pi / 2, roll=0.8)
    back = pose_from_matrix(pose.to_matrix())
    assert back.roll == 0.0
    assert np.max(np.abs(rotation_matrix(back) - rotation_matrix(pose))) < 1e-9


# --- validation --------------------------------------------------------------

def test_point_cloud_rejects_nan():
    with pytest.raises(InvalidInputError):
        PointCloud([[0.0, math.nan, 0.0]])


def test_point_cloud_rejects_bad_shape():
    with pytest.raises(InvalidInputError):
        PointCloud([[1.0, 2.0]])


def test_point_cloud_allows_empty_container():
    cloud = PointCloud(np.empty((0, 3)))
    assert len(cloud) == 0
    with pytest.raises(InvalidInputError):
        cloud.bounding_box()


def test_pose_rejects_nonfinite():
    with pytest.raises(InvalidInputError):
        Pose(yaw=math.inf)


def test_check_rigid_transform_rejects_bad_bottom_row():
    T = np.eye(4)
    T[3, 0] = 1e-15
    with pytest.raises(InvalidInputError):
        check_rigid_transform(T)


def test_check_rigid_transform_rejects_scaled_rotation():
    T = np.eye(4)
    T[:3, :3] *= 1.001
    with pytest.raises(InvalidInputError):
        check_rigid_transform(T)
