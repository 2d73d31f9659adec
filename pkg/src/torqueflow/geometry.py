"""Rigid-body transforms for the bench world: millimeter translations plus
unit quaternions (w, x, y, z).

Everything here is plain-float and allocation-light because engagement
classification runs it every simulation tick. Quaternions are renormalized
after every construction and composition so downstream code can rely on
|q| == 1 to within 1e-9.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

Vec3 = tuple[float, float, float]
Quat = tuple[float, float, float, float]

# Constructors reject anything further from unit than this; values inside the
# band are silently renormalized.
QUAT_NORM_SLACK = 1e-6


class GeometryError(ValueError):
    """Raised for non-unit quaternions and other malformed geometric input."""


def _as_vec3(v) -> Vec3:
    x, y, z = v
    return (float(x), float(y), float(z))


def quat_normalize(q) -> Quat:
    w, x, y, z = q
    n = math.sqrt(w * w + x * x + y * y + z * z)
    if abs(n - 1.0) > QUAT_NORM_SLACK:
        raise GeometryError(f"quaternion norm {n:.9f} too far from 1")
    return (w / n, x / n, y / n, z / n)


def quat_mul(a: Quat, b: Quat) -> Quat:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def quat_conjugate(q: Quat) -> Quat:
    w, x, y, z = q
    return (w, -x, -y, -z)


def quat_rotate(q: Quat, v: Vec3) -> Vec3:
    """Rotate vector v by unit quaternion q (q v q*)."""
    w, x, y, z = q
    vx, vy, vz = v
    # t = 2 q_vec x v
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    # v' = v + w t + q_vec x t
    return (
        vx + w * tx + (y * tz - z * ty),
        vy + w * ty + (z * tx - x * tz),
        vz + w * tz + (x * ty - y * tx),
    )


def quat_from_axis_angle(axis, angle_rad: float) -> Quat:
    ax, ay, az = _as_vec3(axis)
    n = math.sqrt(ax * ax + ay * ay + az * az)
    if n == 0.0:
        raise GeometryError("rotation axis must be non-zero")
    s = math.sin(angle_rad / 2.0) / n
    return (math.cos(angle_rad / 2.0), ax * s, ay * s, az * s)


@dataclass(frozen=True)
class Pose:
    """A rigid transform: world_point = rotate(rotation, local_point) + translation.

    translation is in millimeters, rotation is a unit quaternion (w, x, y, z).
    """

    translation: Vec3 = (0.0, 0.0, 0.0)
    rotation: Quat = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "translation", _as_vec3(self.translation))
        object.__setattr__(self, "rotation", quat_normalize(self.rotation))

    def apply(self, point) -> Vec3:
        """Map a point from this pose's local frame into the parent frame."""
        rx, ry, rz = quat_rotate(self.rotation, _as_vec3(point))
        tx, ty, tz = self.translation
        return (rx + tx, ry + ty, rz + tz)

    def to_json(self) -> dict:
        return {"translation": list(self.translation), "rotation": list(self.rotation)}

    @classmethod
    def from_json(cls, obj) -> "Pose":
        if not isinstance(obj, dict) or set(obj) != {"translation", "rotation"}:
            raise GeometryError(f"malformed pose object: {obj!r}")
        return cls(tuple(obj["translation"]), tuple(obj["rotation"]))


IDENTITY = Pose()


def compose(a: Pose, b: Pose) -> Pose:
    """Rigid composition a after b: (a o b).apply(p) == a.apply(b.apply(p))."""
    return Pose(a.apply(b.translation), quat_mul(a.rotation, b.rotation))


def invert(p: Pose) -> Pose:
    qinv = quat_conjugate(p.rotation)
    tx, ty, tz = quat_rotate(qinv, p.translation)
    return Pose((-tx, -ty, -tz), qinv)


def translate(x: float, y: float, z: float) -> Pose:
    return Pose((x, y, z))


def rotate_about(axis, angle_rad: float) -> Pose:
    return Pose((0.0, 0.0, 0.0), quat_from_axis_angle(axis, angle_rad))


def distance(a, b) -> float:
    ax, ay, az = a
    bx, by, bz = b
    return math.sqrt((ax - bx) ** 2 + (ay - by) ** 2 + (az - bz) ** 2)
