"""SE(3) / SE(2) rigid transforms.

Poses store a unit quaternion (w, x, y, z) and a translation in millimeters.
Tangent vectors are ordered (rot_x, rot_y, rot_z, t_x, t_y, t_z); rotations
in radians, translations in millimeters.  Degrees appear only in
:func:`pose_error` and the planar ``norm``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

_SMALL = 1e-6


def _norm(v) -> float:
    return math.sqrt(float(v @ v))


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def hat(w: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix of a 3-vector."""
    return np.array(
        [[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]]
    )


# --------------------------------------------------------------------------
# quaternion helpers (w, x, y, z)


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    # terms paired so that q * conj(q) is exactly the identity
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            (aw * bx + ax * bw) + (ay * bz - az * by),
            (aw * by + ay * bw) + (az * bx - ax * bz),
            (aw * bz + az * bw) + (ax * by - ay * bx),
        ]
    )


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Shepperd's method; returns a quaternion with w >= 0."""
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
        )
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array(
            [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
        )
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array(
            [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
        )
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def rotvec_to_quat(w: np.ndarray) -> np.ndarray:
    theta = math.sqrt(float(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]))
    half = 0.5 * theta
    if theta < _SMALL:
        # sin(x/2)/x series
        k = 0.5 - theta * theta / 48.0
    else:
        k = math.sin(half) / theta
    return np.array([math.cos(half), k * w[0], k * w[1], k * w[2]])


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    """Principal-branch rotation vector (angle in [0, pi]).

    At exactly pi the axis sign is fixed so that its first nonzero component
    is positive.
    """
    w, v = float(q[0]), np.asarray(q[1:], dtype=float)
    if w < 0:
        w, v = -w, -v
    s = _norm(v)
    if s == 0.0:
        return np.zeros(3)
    theta = 2.0 * math.atan2(s, w)
    axis = v / s
    if w == 0.0:
        nz = axis[np.nonzero(axis)[0][0]]
        if nz < 0:
            axis = -axis
    return theta * axis


def so3_left_jacobian(w: np.ndarray) -> np.ndarray:
    theta = _norm(w)
    W = hat(w)
    if theta < _SMALL:
        return np.eye(3) + 0.5 * W + W @ W / 6.0
    t2 = theta * theta
    return (
        np.eye(3)
        + (1 - math.cos(theta)) / t2 * W
        + (theta - math.sin(theta)) / (t2 * theta) * (W @ W)
    )


def so3_left_jacobian_inv(w: np.ndarray) -> np.ndarray:
    theta = _norm(w)
    W = hat(w)
    if theta < _SMALL:
        return np.eye(3) - 0.5 * W + W @ W / 12.0
    t2 = theta * theta
    c = 1.0 / t2 - (1 + math.cos(theta)) / (2 * theta * math.sin(theta))
    return np.eye(3) - 0.5 * W + c * (W @ W)


# --------------------------------------------------------------------------
# types


@dataclass(frozen=True, eq=False)
class Twist:
    """Tangent-space coordinates: axis-angle ``rot`` (rad), ``trans`` (mm)."""

    rot: np.ndarray
    trans: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rot", _frozen(self.rot))
        object.__setattr__(self, "trans", _frozen(self.trans))

    @classmethod
    def from_vector(cls, v: Sequence[float]) -> "Twist":
        v = np.asarray(v, dtype=float)
        return cls(v[:3], v[3:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.rot, self.trans])

    def __repr__(self):
        return f"Twist(rot={self.rot.tolist()}, trans={self.trans.tolist()})"


@dataclass(frozen=True, eq=False)
class Pose:
    """Element of SE(3): unit quaternion ``q`` (w, x, y, z) and translation ``t`` (mm).

    Acts on points as ``p -> R p + t``.  Immutable.
    """

    q: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        n = math.sqrt(float(q @ q)) if q.shape == (4,) else float("nan")
        if not math.isfinite(n) or n == 0:
            raise ValueError(f"invalid quaternion {q}")
        q /= n
        q.setflags(write=False)
        object.__setattr__(self, "q", q)
        t = np.array(self.t, dtype=float)
        if t.shape != (3,) or not math.isfinite(float(t.sum())):
            raise ValueError(f"invalid translation {t}")
        t.setflags(write=False)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> "Pose":
        T = np.asarray(T, dtype=float)
        return cls(matrix_to_quat(T[:3, :3]), T[:3, 3])

    @classmethod
    def from_rotation(cls, R: np.ndarray, t=(0.0, 0.0, 0.0)) -> "Pose":
        return cls(matrix_to_quat(np.asarray(R, dtype=float)), t)

    @classmethod
    def from_rotvec(cls, rotvec, t=(0.0, 0.0, 0.0)) -> "Pose":
        return cls(rotvec_to_quat(np.asarray(rotvec, dtype=float)), t)

    @classmethod
    def from_translation(cls, t) -> "Pose":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), t)

    @classmethod
    def _trusted(cls, q: np.ndarray, t: np.ndarray) -> "Pose":
        # group operations on valid poses skip validation; only renormalize
        q = q / math.sqrt(float(q @ q))
        q.setflags(write=False)
        t.setflags(write=False)
        p = object.__new__(cls)
        object.__setattr__(p, "q", q)
        object.__setattr__(p, "t", t)
        return p

    @property
    def rotation(self) -> np.ndarray:
        R = self.__dict__.get("_R")
        if R is None:
            R = quat_to_matrix(self.q)
            R.setflags(write=False)
            self.__dict__["_R"] = R
        return R

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.t
        return T

    def rotvec(self) -> np.ndarray:
        return quat_to_rotvec(self.q)

    def angle(self) -> float:
        """Rotation angle in radians, in [0, pi]."""
        s = _norm(self.q[1:])
        return 2.0 * math.atan2(s, abs(float(self.q[0])))

    def act(self, points: np.ndarray) -> np.ndarray:
        """Transform an (N, 3) array (or a single 3-vector) of points."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.t

    def __matmul__(self, other: "Pose") -> "Pose":
        return compose(self, other)

    def inverse(self) -> "Pose":
        return inverse(self)

    def isclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        dt, dr = pose_error(self, other)
        return dt <= atol and math.radians(dr) <= atol

    def __repr__(self):
        return f"Pose(q={np.round(self.q, 12).tolist()}, t={np.round(self.t, 12).tolist()})"


@dataclass(frozen=True)
class PlanarPose:
    """In-plane rigid motion (x, y in mm, yaw in rad)."""

    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0

    @classmethod
    def identity(cls) -> "PlanarPose":
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_pose(cls, p: Pose) -> "PlanarPose":
        """Project onto SE(2): keep x, y and the heading of the rotated x-axis."""
        R = p.rotation
        return cls(float(p.t[0]), float(p.t[1]), math.atan2(R[1, 0], R[0, 0]))

    def to_pose(self) -> Pose:
        return lift_to_se3(self)

    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return np.array([[c, -s], [s, c]])

    def act(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        return xy @ self.rotation().T + np.array([self.x, self.y])

    def compose(self, other: "PlanarPose") -> "PlanarPose":
        x, y = self.act(np.array([other.x, other.y]))
        yaw = math.atan2(math.sin(self.yaw + other.yaw), math.cos(self.yaw + other.yaw))
        return PlanarPose(float(x), float(y), yaw)

    def inverse(self) -> "PlanarPose":
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return PlanarPose(-(c * self.x + s * self.y), -(-s * self.x + c * self.y), -self.yaw)

    def norm(self) -> float:
        """Translation (mm) plus rotation (deg) weighted at 1 mm per degree."""
        return math.hypot(self.x, self.y) + abs(math.degrees(self.yaw))

    def __matmul__(self, other: "PlanarPose") -> "PlanarPose":
        return self.compose(other)


# --------------------------------------------------------------------------
# group operations


def compose(a: Pose, b: Pose) -> Pose:
    q = quat_multiply(a.q, b.q)
    t = a.rotation @ b.t + a.t
    return Pose._trusted(q, t)


def inverse(p: Pose) -> Pose:
    qi = p.q * _CONJ
    R = p.rotation.T
    out = Pose._trusted(qi, -(R @ p.t))
    out.__dict__["_R"] = R
    return out


_CONJ = np.array([1.0, -1.0, -1.0, -1.0])


def exp(v) -> Pose:
    """Exponential map; accepts a :class:`Twist` or a 6-vector (rot, trans)."""
    vec = v.as_vector() if isinstance(v, Twist) else np.asarray(v, dtype=float)
    w, u = vec[:3], vec[3:]
    return Pose(rotvec_to_quat(w), so3_left_jacobian(w) @ u)


def log(p: Pose) -> Twist:
    w = quat_to_rotvec(p.q)
    return Twist(w, so3_left_jacobian_inv(w) @ p.t)


def log_vector(p: Pose) -> np.ndarray:
    w = quat_to_rotvec(p.q)
    return np.concatenate([w, so3_left_jacobian_inv(w) @ p.t])


def pose_error(a: Pose, b: Pose) -> tuple[float, float]:
    """Translation (mm) and rotation angle (deg) of ``inverse(a) * b``."""
    d = compose(inverse(a), b)
    return _norm(d.t), math.degrees(d.angle())


def lift_to_se3(p: PlanarPose) -> Pose:
    h = 0.5 * p.yaw
    return Pose(np.array([math.cos(h), 0.0, 0.0, math.sin(h)]), np.array([p.x, p.y, 0.0]))


def rot_z(angle: float, t=(0.0, 0.0, 0.0)) -> Pose:
    return Pose.from_rotvec([0.0, 0.0, angle], t)


def adjoint(p: Pose) -> np.ndarray:
    """6x6 adjoint in (rot, trans) ordering: ``p exp(x) p^-1 = exp(Ad x)``."""
    R = p.rotation
    A = np.zeros((6, 6))
    A[:3, :3] = R
    A[3:, 3:] = R
    A[3:, :3] = hat(p.t) @ R
    return A


def _se3_q_block(w: np.ndarray, u: np.ndarray) -> np.ndarray:
    # lower-left block of the SE(3) left Jacobian (Barfoot's Q)
    W, U = hat(w), hat(u)
    theta = _norm(w)
    WU, UW, WUW = W @ U, U @ W, W @ U @ W
    if theta < 1e-4:
        c1, c2, c3 = 1.0 / 6.0, 1.0 / 24.0, 1.0 / 120.0
    else:
        s, c = math.sin(theta), math.cos(theta)
        t2 = theta * theta
        c1 = (theta - s) / (t2 * theta)
        c2 = (t2 + 2 * c - 2) / (2 * t2 * t2)
        c3 = (2 * theta - 3 * s + theta * c) / (2 * t2 * t2 * theta)
    return (
        0.5 * U
        + c1 * (WU + UW + WUW)
        + c2 * (W @ WU + UW @ W - 3 * WUW)
        + c3 * (WUW @ W + W @ WUW)
    )


def se3_left_jacobian(xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    w, u = xi[:3], xi[3:]
    J = so3_left_jacobian(w)
    out = np.zeros((6, 6))
    out[:3, :3] = J
    out[3:, 3:] = J
    out[3:, :3] = _se3_q_block(w, u)
    return out


def se3_right_jacobian_inv(xi: np.ndarray) -> np.ndarray:
    """Inverse right Jacobian: ``log(exp(xi) exp(d)) ~ xi + Jr^-1(xi) d``."""
    xi = -np.asarray(xi, dtype=float)
    w, u = xi[:3], xi[3:]
    Ji = so3_left_jacobian_inv(w)
    out = np.zeros((6, 6))
    out[:3, :3] = Ji
    out[3:, 3:] = Ji
    out[3:, :3] = -Ji @ _se3_q_block(w, u) @ Ji
    return out


# --------------------------------------------------------------------------
# point clouds


@dataclass(frozen=True, eq=False)
class PointCloud:
    """(N, 3) points in millimeters."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", _frozen(pts))

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)))

    def __len__(self):
        return len(self.points)

    def transformed(self, pose: Pose) -> "PointCloud":
        return PointCloud(pose.act(self.points)) if len(self) else self


# --------------------------------------------------------------------------
# trajectory text format: "t tx ty tz qw qx qy qz"


def format_pose(p: Pose) -> str:
    return " ".join(repr(float(v)) for v in (*p.t, *p.q))


def parse_pose(fields: Sequence[str]) -> Pose:
    vals = [float(f) for f in fields]
    if len(vals) != 7:
        raise ValueError(f"expected 7 pose fields, got {len(vals)}")
    return Pose(vals[3:], vals[:3])


def write_trajectory(path, poses: Iterable[Pose], stamps: Iterable[float] | None = None) -> None:
    poses = list(poses)
    stamps = list(range(len(poses))) if stamps is None else list(stamps)
    lines = [f"{s} {format_pose(p)}" for s, p in zip(stamps, poses)]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_trajectory(path) -> tuple[list[float], list[Pose]]:
    stamps, poses = [], []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 8:
            raise ValueError(f"malformed trajectory line: {line!r}")
        stamps.append(float(fields[0]))
        poses.append(parse_pose(fields[1:]))
    return stamps, poses
