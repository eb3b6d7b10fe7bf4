"""Coordinate frames, rigid transforms, and the pinhole camera model.

Conventions, used everywhere in this package:

* Lengths are millimeters; positions are in the robot-base frame unless a
  name says otherwise.  The table surface is the base-frame ``z = 0`` plane.
* Quaternions are stored ``(w, x, y, z)`` and kept unit-norm.
* The camera looks along its own +z axis.  With the fixed down-looking
  gripper used for data collection, camera +z is base -z, camera +x is
  base +x and camera +y is base -y; that orientation is ``DOWN_QUAT``
  (a 180-degree rotation about the base x axis).
* Pixel ``u`` grows with column index, ``v`` with row index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCamera

# Depth below this (mm) counts as behind the camera.
DEPTH_EPSILON = 1e-6

IDENTITY_QUAT = (1.0, 0.0, 0.0, 0.0)
#: Orientation of a camera pointing straight down at the table.
DOWN_QUAT = (0.0, 1.0, 0.0, 0.0)


def _as_vec(values, n: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite, got {arr}")
    return arr


@dataclass(frozen=True)
class Pose:
    """Rigid pose: position in mm plus a unit quaternion, base frame.

    Quaternions within 1e-3 of unit norm are renormalized on construction;
    anything further off is rejected.
    """

    position: np.ndarray
    quat: np.ndarray = field(default=IDENTITY_QUAT)

    def __post_init__(self):
        position = _as_vec(self.position, 3, "position")
        quat = _as_vec(self.quat, 4, "quaternion")
        norm = float(np.linalg.norm(quat))
        if abs(norm - 1.0) > 1e-3:
            raise ValueError(f"quaternion norm {norm} too far from 1")
        quat = quat / norm
        position.flags.writeable = False
        quat.flags.writeable = False
        object.__setattr__(self, "position", position)
        object.__setattr__(self, "quat", quat)

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.quat)

    def compose(self, other: "Pose") -> "Pose":
        """Pose of ``other`` expressed through this pose (this ∘ other)."""
        rot = self.rotation_matrix()
        return Pose(self.position + rot @ other.position,
                    quat_multiply(self.quat, other.quat))

    def approx_equal(self, other: "Pose", tol: float = 1e-9) -> bool:
        qa, qb = self.quat, other.quat
        if float(np.dot(qa, qb)) < 0.0:
            qb = -qb
        return (np.allclose(self.position, other.position, atol=tol)
                and np.allclose(qa, qb, atol=tol))


def identity_pose() -> Pose:
    return Pose(np.zeros(3), IDENTITY_QUAT)


def quat_to_matrix(quat) -> np.ndarray:
    """Rotation matrix of a unit quaternion (w, x, y, z)."""
    w, x, y, z = np.asarray(quat, dtype=np.float64)
    return np.array([
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ])


def quat_multiply(a, b) -> np.ndarray:
    aw, ax, ay, az = np.asarray(a, dtype=np.float64)
    bw, bx, by, bz = np.asarray(b, dtype=np.float64)
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus the camera's mounting pose relative to the TCP."""

    fx: float = 70.0
    fy: float = 70.0
    cx: float = 32.0
    cy: float = 32.0
    width: int = 64
    height: int = 64
    mount_offset: Pose = field(default_factory=identity_pose)

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")


@dataclass(frozen=True)
class Workspace:
    """Axis-aligned reachable box, base frame, mm."""

    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        lo = _as_vec(self.min_corner, 3, "min_corner")
        hi = _as_vec(self.max_corner, 3, "max_corner")
        if not np.all(lo < hi):
            raise ValueError("min_corner must be strictly below max_corner componentwise")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "min_corner", lo)
        object.__setattr__(self, "max_corner", hi)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min_corner + self.max_corner)

    @property
    def size(self) -> np.ndarray:
        return self.max_corner - self.min_corner

    def contains(self, point, margin: float = 0.0) -> bool:
        p = np.asarray(point, dtype=np.float64)
        return bool(np.all(p >= self.min_corner + margin)
                    and np.all(p <= self.max_corner - margin))


def default_workspace() -> Workspace:
    """Desk-scale workspace: a 280 mm square table patch, 420 mm of clearance."""
    return Workspace(np.array([-140.0, -140.0, 0.0]),
                     np.array([140.0, 140.0, 420.0]))


def transform_base_to_camera(point, camera_pose: Pose) -> np.ndarray:
    """Express a base-frame point in the camera frame of ``camera_pose``."""
    p = _as_vec(point, 3, "point")
    rot = camera_pose.rotation_matrix()
    return rot.T @ (p - camera_pose.position)


def transform_camera_to_base(point_cam, camera_pose: Pose) -> np.ndarray:
    """Inverse of :func:`transform_base_to_camera`."""
    p = _as_vec(point_cam, 3, "point")
    rot = camera_pose.rotation_matrix()
    return rot @ p + camera_pose.position


def project_point(point_base, camera_pose: Pose, cam: CameraModel) -> tuple[float, float]:
    """Project a base-frame point to pixel (u, v).

    Raises :class:`BehindCamera` when the point's camera-frame depth is at
    or below ``DEPTH_EPSILON``.
    """
    p_cam = transform_base_to_camera(point_base, camera_pose)
    z = p_cam[2]
    if z <= DEPTH_EPSILON:
        raise BehindCamera(f"point depth {z:.6g} mm is not in front of the camera")
    u = cam.cx + cam.fx * (p_cam[0] / z)
    v = cam.cy + cam.fy * (p_cam[1] / z)
    return float(u), float(v)


def down_pose(position) -> Pose:
    """Pose at ``position`` with the fixed down-looking camera orientation."""
    return Pose(position, DOWN_QUAT)
