"""Error metrics between an estimated and a ground-truth rigid transform."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import InvalidInputError, Pose, compose, inverse


@dataclass(frozen=True)
class ErrorPair:
    """Translation error in meters, rotation error in radians within [0, pi]."""

    translation_error: float
    rotation_error: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.translation_error) and self.translation_error >= 0.0):
            raise InvalidInputError(f"bad translation error {self.translation_error}")
        if not (0.0 <= self.rotation_error <= math.pi):
            raise InvalidInputError(f"rotation error outside [0, pi]: {self.rotation_error}")

    @property
    def rotation_error_deg(self) -> float:
        return math.degrees(self.rotation_error)


def pose_errors(truth: Pose, estimate: Pose) -> ErrorPair:
    """Errors of the relative transform ``truth^-1 * estimate``.

    Translation error is the norm of its translation part; rotation error is
    ``arccos((trace(R) - 1) / 2)`` of its rotation block, with the arccos
    argument clamped to [-1, 1] so rounding drift can never produce NaN.
    """
    delta = compose(inverse(truth.to_matrix()), estimate.to_matrix())
    trans = float(np.linalg.norm(delta[:3, 3]))
    cos_angle = (np.trace(delta[:3, :3]) - 1.0) / 2.0
    rot = float(np.arccos(np.clip(cos_angle, -1.0, 1.0)))
    return ErrorPair(trans, rot)
