"""Rigid-body math: rotations on SO(3), poses, exponential/log maps and
distance metrics shared by the renderer, pose pipeline, filter and controller.

Conventions:
    - Quaternions are stored (w, x, y, z), unit norm, canonical sign w >= 0.
    - A Pose maps body-frame coordinates to world frame: p_w = R @ p_b + x.
    - Angles are radians everywhere; degrees appear only in reporting metrics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

_QUAT_NORM_EPS = 1e-12


def hat(v) -> np.ndarray:
    """Skew-symmetric matrix of a 3-vector: hat(v) @ w == cross(v, w)."""
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m) -> np.ndarray:
    """Inverse of :func:`hat`. Rejects matrices that are not skew-symmetric."""
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError(f"vee expects a 3x3 matrix, got shape {m.shape}")
    if np.max(np.abs(m + m.T)) >= 1e-6:
        raise ValueError("vee: matrix is not skew-symmetric")
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


@dataclass(frozen=True)
class Rotation:
    """Rotation stored as a unit quaternion with lazy matrix conversion.

    Construct via :meth:`from_quat`, :meth:`from_matrix`, :meth:`exp` or
    :meth:`identity`; the raw constructor assumes an already-normalized,
    sign-canonical quaternion.
    """

    quat: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    @staticmethod
    def identity() -> "Rotation":
        return Rotation()

    @staticmethod
    def from_quat(q) -> "Rotation":
        """Normalize (w,x,y,z) and canonicalize sign so w >= 0."""
        q = np.asarray(q, dtype=float)
        if q.shape != (4,):
            raise ValueError("quaternion must have 4 components (w, x, y, z)")
        n = math.sqrt(float(q @ q))
        if n < _QUAT_NORM_EPS:
            raise ValueError("cannot normalize near-zero quaternion")
        q = q / n
        if q[0] < 0.0:
            q = -q
        return Rotation(q)

    @staticmethod
    def from_matrix(m) -> "Rotation":
        """Shepperd's method; input is assumed close to orthonormal."""
        m = np.asarray(m, dtype=float)
        if m.shape != (3, 3):
            raise ValueError("rotation matrix must be 3x3")
        t = m[0, 0] + m[1, 1] + m[2, 2]
        if t > 0.0:
            s = math.sqrt(t + 1.0) * 2.0
            q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s,
                 (m[1, 0] - m[0, 1]) / s]
        elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s,
                 (m[0, 2] + m[2, 0]) / s]
        elif m[1, 1] > m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
            q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s,
                 (m[1, 2] + m[2, 1]) / s]
        else:
            s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
            q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s,
                 (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        return Rotation.from_quat(q)

    @staticmethod
    def exp(omega) -> "Rotation":
        """Exponential map (Rodrigues): rotation by angle ||omega|| about omega."""
        omega = np.asarray(omega, dtype=float)
        angle = math.sqrt(float(omega @ omega))
        if angle < 1e-12:
            # second-order series keeps the map smooth through zero
            half = 0.5 * angle
            w = 1.0 - half * half / 2.0
            xyz = omega * (0.5 - angle * angle / 48.0)
        else:
            half = 0.5 * angle
            w = math.cos(half)
            xyz = omega * (math.sin(half) / angle)
        return Rotation.from_quat([w, xyz[0], xyz[1], xyz[2]])

    @cached_property
    def matrix(self) -> np.ndarray:
        w, x, y, z = self.quat
        xx, yy, zz = x * x, y * y, z * z
        wx, wy, wz = w * x, w * y, w * z
        xy, xz, yz = x * y, x * z, y * z
        m = np.array([
            [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
            [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
            [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
        ])
        m.setflags(write=False)
        return m

    def log(self) -> np.ndarray:
        """Inverse of :meth:`exp`; raises near the pi cut locus."""
        w = min(1.0, self.quat[0])  # canonical sign makes w >= 0
        xyz = self.quat[1:]
        s = math.sqrt(max(0.0, 1.0 - w * w))
        angle = 2.0 * math.atan2(s, w)
        if angle >= math.pi - 1e-6:
            raise ValueError("log map undefined this close to the pi cut locus")
        if s < 1e-12:
            return xyz * (2.0 + angle * angle / 12.0)
        return xyz * (angle / s)

    def axis_angle(self) -> tuple[np.ndarray, float]:
        """Unit axis and angle in [0, pi]; axis defaults to +z at identity."""
        w = min(1.0, self.quat[0])
        s = math.sqrt(max(0.0, 1.0 - w * w))
        angle = 2.0 * math.atan2(s, w)
        if s < 1e-12:
            return np.array([0.0, 0.0, 1.0]), angle
        return self.quat[1:] / s, angle

    def yaw_pitch_roll(self) -> np.ndarray:
        """Intrinsic Z-Y-X Euler angles (rad), a plotting convenience only;
        the geodesic angle is the primary rotation metric."""
        m = self.matrix
        pitch = math.asin(max(-1.0, min(1.0, -m[2, 0])))
        if abs(m[2, 0]) > 1.0 - 1e-9:  # gimbal lock: fold roll into yaw
            return np.array([math.atan2(-m[0, 1], m[1, 1]), pitch, 0.0])
        return np.array([math.atan2(m[1, 0], m[0, 0]), pitch,
                         math.atan2(m[2, 1], m[2, 2])])

    def __matmul__(self, other):
        if isinstance(other, Rotation):
            w1, x1, y1, z1 = self.quat
            w2, x2, y2, z2 = other.quat
            # Hamilton product, re-normalized to stop drift under long chains
            return Rotation.from_quat([
                w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
                w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
                w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
                w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
            ])
        return self.apply(other)

    def apply(self, v) -> np.ndarray:
        return self.matrix @ np.asarray(v, dtype=float)

    def inverse(self) -> "Rotation":
        w, x, y, z = self.quat
        return Rotation(np.array([w, -x, -y, -z]) if w >= 0 else np.array([-w, x, y, z]))

    def allclose(self, other: "Rotation", atol: float = 1e-9) -> bool:
        # q and -q are the same rotation; canonical sign makes this a plain compare
        return bool(np.allclose(self.quat, other.quat, atol=atol))

    def __repr__(self):
        w, x, y, z = self.quat
        return f"Rotation(w={w:.6f}, x={x:.6f}, y={y:.6f}, z={z:.6f})"


def exp_map(omega) -> Rotation:
    return Rotation.exp(omega)


def log_map(rotation: Rotation) -> np.ndarray:
    return rotation.log()


def geodesic_deg(r1: Rotation, r2: Rotation) -> float:
    """Geodesic distance on SO(3) in degrees: the angle of r1^T r2, in [0, 180]."""
    # |<q1, q2>| = cos(theta/2); atan2 form is accurate near 0 and 180
    c = abs(float(r1.quat @ r2.quat))
    c = min(1.0, c)
    s = math.sqrt(max(0.0, 1.0 - c * c))
    return math.degrees(2.0 * math.atan2(s, c))


@dataclass(frozen=True)
class Pose:
    """Rigid transform: p_world = rotation @ p_body + position."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: Rotation = field(default_factory=Rotation.identity)

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float)
        if pos.shape != (3,):
            raise ValueError("position must be a 3-vector")
        if not np.all(np.isfinite(pos)):
            raise ValueError("position must be finite")
        object.__setattr__(self, "position", pos)

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    def apply(self, p) -> np.ndarray:
        return self.rotation.apply(p) + self.position

    def __repr__(self):
        x, y, z = self.position
        return f"Pose(position=[{x:.4f}, {y:.4f}, {z:.4f}], rotation={self.rotation!r})"


def compose(a: Pose, b: Pose) -> Pose:
    """Pose of b expressed through a: (a*b).apply(p) == a.apply(b.apply(p))."""
    return Pose(a.rotation.apply(b.position) + a.position, a.rotation @ b.rotation)


def inverse(p: Pose) -> Pose:
    rinv = p.rotation.inverse()
    return Pose(-rinv.apply(p.position), rinv)


@dataclass(frozen=True)
class StateVector:
    """Full rigid-body state: pose, world-frame velocity, body-frame rates."""

    pose: Pose
    velocity: np.ndarray          # m/s, world frame
    angular_velocity: np.ndarray  # rad/s, body frame
    timestamp: float = 0.0        # seconds, simulation clock

    def __post_init__(self):
        v = np.asarray(self.velocity, dtype=float)
        w = np.asarray(self.angular_velocity, dtype=float)
        if v.shape != (3,) or w.shape != (3,):
            raise ValueError("velocity and angular_velocity must be 3-vectors")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(w))
                and math.isfinite(self.timestamp)):
            raise ValueError("state components must be finite")
        object.__setattr__(self, "velocity", v)
        object.__setattr__(self, "angular_velocity", w)


def pose_to_bytes(pose: Pose) -> bytes:
    """Wire/log layout: position 3xf64 then quaternion 4xf64 (w,x,y,z), LE."""
    buf = np.empty(7, dtype="<f8")
    buf[:3] = pose.position
    buf[3:] = pose.rotation.quat
    return buf.tobytes()


def pose_from_bytes(data: bytes) -> Pose:
    if len(data) != 56:
        raise ValueError(f"pose record must be 56 bytes, got {len(data)}")
    buf = np.frombuffer(data, dtype="<f8")
    return Pose(buf[:3].copy(), Rotation.from_quat(buf[3:]))
