"""Domain types for 3D point clouds and SE(3) rigid transforms.

Conventions used throughout the package:

- lengths in meters, angles in radians (degrees only at CLI boundaries);
- rotations follow the intrinsic Z-Y-X Euler convention,
  ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``;
- a rigid transform acts on a point as ``y = R x + t``;
- homogeneous transforms are plain 4x4 float64 arrays with bottom
  row exactly ``[0, 0, 0, 1]``.

All types are immutable values and safe to share between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TypeAlias

import numpy as np
from numpy.typing import NDArray

Vec3: TypeAlias = NDArray[np.float64]    # shape (3,)
Mat3: TypeAlias = NDArray[np.float64]    # shape (3, 3)
Mat4: TypeAlias = NDArray[np.float64]    # shape (4, 4)
Points: TypeAlias = NDArray[np.float64]  # shape (N, 3)


class InvalidInputError(ValueError):
    """An operation received input violating its preconditions."""


class DegenerateGeometryError(ValueError):
    """Point/center geometry violates the non-hyperplane condition.

    At least four points that do not all lie in a single plane are needed
    for the kernel map to be injective and registration well-posed.
    """


class NumericalFailureError(RuntimeError):
    """Optimization hit a non-finite objective or gradient.

    Carries the last valid iterate so callers can inspect or restart.
    """

    def __init__(self, message: str, last_x: NDArray[np.float64] | None = None,
                 last_f: float | None = None):
        super().__init__(message)
        self.last_x = last_x
        self.last_f = last_f


def _as_points(points: object) -> Points:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise InvalidInputError(f"points must have shape (N, 3), got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("points contain NaN or Inf")
    return np.ascontiguousarray(pts)


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered set of 3D points, in meters.

    An empty cloud is a legal container (e.g. for file IO); every numeric
    operation consuming a cloud requires at least one point and raises
    :class:`InvalidInputError` otherwise.
    """

    points: Points
    frame_label: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", _as_points(self.points))

    def __len__(self) -> int:
        return self.points.shape[0]

    def require_nonempty(self, op: str) -> None:
        if len(self) == 0:
            raise InvalidInputError(f"{op} requires a nonempty point cloud")

    def bounding_box(self) -> tuple[Vec3, Vec3]:
        """Axis-aligned (min, max) corners."""
        self.require_nonempty("bounding_box")
        return self.points.min(axis=0), self.points.max(axis=0)

    def bbox_diagonal(self) -> float:
        """Length of the bounding-box diagonal, the package's natural scale."""
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(hi - lo))


@dataclass(frozen=True)
class Pose:
    """Rigid transform as Z-Y-X Euler angles (radians) plus translation (meters)."""

    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0
    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0

    def __post_init__(self) -> None:
        vals = (self.yaw, self.pitch, self.roll, self.tx, self.ty, self.tz)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidInputError(f"pose components must be finite, got {vals}")

    @classmethod
    def identity(cls) -> Pose:
        return cls()

    @classmethod
    def from_vector(cls, v: NDArray[np.float64]) -> Pose:
        """Build from a 6-vector ordered (yaw, pitch, roll, tx, ty, tz)."""
        v = np.asarray(v, dtype=np.float64).reshape(6)
        return cls(*(float(c) for c in v))

    @classmethod
    def from_matrix(cls, transform: Mat4) -> Pose:
        return pose_from_matrix(transform)

    def as_vector(self) -> NDArray[np.float64]:
        return np.array([self.yaw, self.pitch, self.roll, self.tx, self.ty, self.tz])

    def translation(self) -> Vec3:
        return np.array([self.tx, self.ty, self.tz])

    def rotation_matrix(self) -> Mat3:
        return rotation_matrix(self)

    def to_matrix(self) -> Mat4:
        T = np.eye(4)
        T[:3, :3] = rotation_matrix(self)
        T[:3, 3] = self.translation()
        return T


def rotation_matrix(pose: Pose) -> Mat3:
    """Rotation matrix ``Rz(yaw) @ Ry(pitch) @ Rx(roll)``."""
    cy, sy = math.cos(pose.yaw), math.sin(pose.yaw)
    cp, sp = math.cos(pose.pitch), math.sin(pose.pitch)
    cr, sr = math.cos(pose.roll), math.sin(pose.roll)
    return np.array([
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ])


def rotation_matrix_partials(pose: Pose) -> NDArray[np.float64]:
    """Stack of dR/d(yaw), dR/d(pitch), dR/d(roll), shape (3, 3, 3).

    Each partial differentiates exactly one factor of Rz @ Ry @ Rx.
    """
    cy, sy = math.cos(pose.yaw), math.sin(pose.yaw)
    cp, sp = math.cos(pose.pitch), math.sin(pose.pitch)
    cr, sr = math.cos(pose.roll), math.sin(pose.roll)
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    drz = np.array([[-sy, -cy, 0.0], [cy, -sy, 0.0], [0.0, 0.0, 0.0]])
    dry = np.array([[-sp, 0.0, cp], [0.0, 0.0, 0.0], [-cp, 0.0, -sp]])
    drx = np.array([[0.0, 0.0, 0.0], [0.0, -sr, -cr], [0.0, cr, -sr]])
    return np.stack([drz @ ry @ rx, rz @ dry @ rx, rz @ ry @ drx])


def transform_points(pose: Pose, points: Points) -> Points:
    """Apply ``R x + t`` row-wise to an (N, 3) array."""
    return points @ rotation_matrix(pose).T + pose.translation()


def apply(pose: Pose, cloud: PointCloud) -> PointCloud:
    """Transform every point of a cloud, preserving order and frame size."""
    cloud.require_nonempty("apply")
    return PointCloud(transform_points(pose, cloud.points), cloud.frame_label)


def compose(a: Mat4, b: Mat4) -> Mat4:
    """Composition ``a @ b``: apply ``b`` first, then ``a``."""
    return np.asarray(a, dtype=np.float64) @ np.asarray(b, dtype=np.float64)


def inverse(transform: Mat4) -> Mat4:
    """Closed-form rigid inverse ``[[R^T, -R^T t], [0, 1]]``."""
    T = np.asarray(transform, dtype=np.float64)
    R = T[:3, :3]
    out = np.eye(4)
    out[:3, :3] = R.T
    out[:3, 3] = -R.T @ T[:3, 3]
    return out


def check_rigid_transform(transform: Mat4, tol: float = 1e-12) -> None:
    """Raise :class:`InvalidInputError` unless ``transform`` is a valid
    homogeneous rigid transform (orthogonal R, det +1, exact bottom row)."""
    T = np.asarray(transform, dtype=np.float64)
    if T.shape != (4, 4):
        raise InvalidInputError(f"transform must be 4x4, got {T.shape}")
    if not np.array_equal(T[3], [0.0, 0.0, 0.0, 1.0]):
        raise InvalidInputError("bottom row must be exactly [0, 0, 0, 1]")
    R = T[:3, :3]
    if np.max(np.abs(R.T @ R - np.eye(3))) > tol:
        raise InvalidInputError("rotation block is not orthogonal")
    if abs(np.linalg.det(R) - 1.0) > tol:
        raise InvalidInputError("rotation block must have determinant +1")


def pose_from_matrix(transform: Mat4) -> Pose:
    """Extract Z-Y-X Euler angles and translation from a rigid transform.

    Near the gimbal lock pitch = +-pi/2 only yaw -+ roll is observable;
    this function picks roll = 0 and folds the whole z-rotation into yaw.
    """
    T = np.asarray(transform, dtype=np.float64)
    check_rigid_transform(T, tol=1e-9)
    R = T[:3, :3]
    cos_pitch = math.hypot(R[2, 1], R[2, 2])
    pitch = math.atan2(-R[2, 0], cos_pitch)
    if cos_pitch < 1e-12:
        yaw = math.atan2(-R[0, 1], R[1, 1])
        roll = 0.0
    else:
        yaw = math.atan2(R[1, 0], R[0, 0])
        roll = math.atan2(R[2, 1], R[2, 2])
    return Pose(yaw, pitch, roll, float(T[0, 3]), float(T[1, 3]), float(T[2, 3]))
