"""Frames, rigid-body value types, skew/vee operators and tracking errors.

Quaternions are stored scalar-first, ``(w, x, y, z)``.  Stacked 6-vectors
always use ``[linear; angular]`` (twists) or ``[force; torque]`` (wrenches),
so block gains line up axis for axis.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

GRAVITY = 9.81
GRAVITY_W = np.array([0.0, 0.0, -GRAVITY])


class ValidationError(ValueError):
    """Raised when an input violates an operator precondition."""


class FrameId(str, enum.Enum):
    W = "W"
    B = "B"
    T = "T"
    C = "C"


def hat(v) -> np.ndarray:
    """Skew-symmetric cross-product matrix, ``hat(v) @ w == cross(v, w)``."""
    x, y, z = float(v[0]), float(v[1]), float(v[2])
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def cross3(a, b) -> np.ndarray:
    """``np.cross`` for two 3-vectors without the axis bookkeeping (hot loops)."""
    a0, a1, a2 = float(a[0]), float(a[1]), float(a[2])
    b0, b1, b2 = float(b[0]), float(b[1]), float(b[2])
    return np.array([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])


def vee(S, tol: float = 1e-9) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.shape != (3, 3):
        raise ValidationError(f"vee expects a 3x3 matrix, got shape {S.shape}")
    asym = np.linalg.norm(S + S.T)
    if not asym < tol:
        raise ValidationError(f"matrix is not skew-symmetric (|S + S^T| = {asym:.3e})")
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def blockdiag(A, B) -> np.ndarray:
    out = np.zeros((6, 6))
    out[:3, :3] = A
    out[3:, 3:] = B
    return out


# --- quaternions -----------------------------------------------------------

def quat_multiply(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = math.sqrt(float(q @ q))
    if n == 0.0 or not math.isfinite(n):
        raise ValidationError("cannot normalize a zero or non-finite quaternion")
    q = q / n
    # canonical hemisphere keeps serialized output stable
    return -q if q[0] < 0.0 else q


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    return quat_normalize(q)


def quat_exp(rotvec) -> np.ndarray:
    """Unit quaternion of the rotation vector ``rotvec`` (axis * angle)."""
    rv = np.asarray(rotvec, dtype=float)
    angle = math.sqrt(float(rv @ rv))
    if angle < 1e-12:
        return np.array([1.0, 0.5 * rv[0], 0.5 * rv[1], 0.5 * rv[2]]) / math.sqrt(1.0 + 0.25 * angle * angle)
    s = math.sin(0.5 * angle) / angle
    return np.array([math.cos(0.5 * angle), s * rv[0], s * rv[1], s * rv[2]])


def rotation_log(R) -> np.ndarray:
    """Rotation vector of ``R`` (inverse of the exponential map)."""
    R = np.asarray(R, dtype=float)
    q = matrix_to_quat(R)
    w = min(1.0, q[0])
    s = math.sqrt(max(0.0, 1.0 - w * w))
    angle = 2.0 * math.atan2(s, w)
    if s < 1e-12:
        return 2.0 * q[1:]
    return q[1:] / s * angle


def rot_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return quat_to_matrix(quat_exp(axis * angle))


def rot_x(a: float) -> np.ndarray:
    return rot_axis_angle([1.0, 0.0, 0.0], a)


def rot_y(a: float) -> np.ndarray:
    return rot_axis_angle([0.0, 1.0, 0.0], a)


def rot_z(a: float) -> np.ndarray:
    return rot_axis_angle([0.0, 0.0, 1.0], a)


def is_rotation(R, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=float)
    return (
        R.shape == (3, 3)
        and np.allclose(R @ R.T, np.eye(3), atol=tol)
        and abs(np.linalg.det(R) - 1.0) < tol
    )


# --- value types ----------------------------------------------------------

@dataclass(frozen=True)
class Pose:
    """Pose of ``child`` expressed in ``parent``: ``p_parent = R @ p_child + position``."""

    position: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    parent: FrameId = FrameId.W
    child: FrameId = FrameId.B

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(3)
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        if not np.all(np.isfinite(p)):
            raise ValidationError("pose position must be finite")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "rotation", R)

    def compose(self, other: "Pose") -> "Pose":
        if self.child != other.parent:
            raise ValidationError(
                f"cannot compose {self.parent.value}->{self.child.value} with "
                f"{other.parent.value}->{other.child.value}"
            )
        return Pose(
            self.rotation @ other.position + self.position,
            self.rotation @ other.rotation,
            self.parent,
            other.child,
        )

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(-Rt @ self.position, Rt, self.child, self.parent)

    def transform(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.rotation.T + self.position


@dataclass(frozen=True)
class Twist:
    linear: np.ndarray
    angular: np.ndarray

    @classmethod
    def zero(cls) -> "Twist":
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_vector(cls, v) -> "Twist":
        v = np.asarray(v, dtype=float)
        return cls(v[:3].copy(), v[3:].copy())

    def vector(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])


@dataclass(frozen=True)
class Wrench:
    force: np.ndarray
    torque: np.ndarray

    @classmethod
    def zero(cls) -> "Wrench":
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_vector(cls, w) -> "Wrench":
        w = np.asarray(w, dtype=float)
        return cls(w[:3].copy(), w[3:].copy())

    def vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque])

    def __add__(self, other: "Wrench") -> "Wrench":
        return Wrench(self.force + other.force, self.torque + other.torque)


@dataclass(frozen=True)
class ErrorVector:
    """Tracking errors, all expressed in the body frame."""

    e_p: np.ndarray
    e_R: np.ndarray
    e_v: np.ndarray
    e_w: np.ndarray

    @property
    def pose(self) -> np.ndarray:
        return np.concatenate([self.e_p, self.e_R])

    @property
    def velocity(self) -> np.ndarray:
        return np.concatenate([self.e_v, self.e_w])


def attitude_error(R, R_ref) -> np.ndarray:
    return 0.5 * vee(R_ref.T @ R - R.T @ R_ref, tol=1e-6)


def tracking_errors(p, R, v_B, w_B, p_ref, R_ref, v_ref_W, w_ref_W) -> ErrorVector:
    """Body-frame tracking errors.

    ``p``, ``R`` are the world position and attitude ``R_WB``; ``v_B``/``w_B``
    the body-frame twist.  The reference twist is given in the world frame.
    """
    R = np.asarray(R, dtype=float)
    R_ref = np.asarray(R_ref, dtype=float)
    R_BW = R.T
    return ErrorVector(
        e_p=R_BW @ (np.asarray(p, dtype=float) - np.asarray(p_ref, dtype=float)),
        e_R=attitude_error(R, R_ref),
        e_v=np.asarray(v_B, dtype=float) - R_BW @ np.asarray(v_ref_W, dtype=float),
        e_w=np.asarray(w_B, dtype=float) - R_BW @ np.asarray(w_ref_W, dtype=float),
    )
