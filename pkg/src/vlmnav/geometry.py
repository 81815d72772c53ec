"""Coordinate frames, rigid 2D transforms, and ground-plane camera projection.

Frame conventions used throughout the stack:

* ``odom``  - fixed world frame the robot's pose is integrated in.
* ``robot`` - attached to the robot base, X forward, Y leftward.
* ``grid``  - attached to the center of the robot-centric occupancy grid,
  axes aligned with the robot frame (row index grows forward, column
  index grows leftward).
* image pixels - origin at the top-left corner, u rightward across
  columns, v downward across rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

ODOM = "odom"
ROBOT = "robot"
GRID = "grid"


class FrameError(ValueError):
    """Point expressed in a different frame than the transform expects."""


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = (theta + math.pi) % (2.0 * math.pi) - math.pi
    if wrapped == -math.pi:
        return math.pi
    return wrapped


@dataclass(frozen=True)
class Pose2D:
    """Planar pose. ``theta`` is always stored wrapped to (-pi, pi]."""

    x: float
    y: float
    theta: float
    frame: str = ODOM

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class FrameTransform:
    """Rigid transform taking points in ``from_frame`` to ``to_frame``.

    p_to = R(rotation) @ p_from + translation
    """

    rotation: float
    translation: tuple[float, float]
    from_frame: str
    to_frame: str

    @staticmethod
    def identity(frame: str) -> "FrameTransform":
        return FrameTransform(0.0, (0.0, 0.0), frame, frame)

    @staticmethod
    def from_pose(pose: Pose2D) -> "FrameTransform":
        """Transform taking robot-frame points into the pose's frame."""
        return FrameTransform(pose.theta, (pose.x, pose.y), ROBOT, pose.frame)

    def invert(self) -> "FrameTransform":
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        tx, ty = self.translation
        return FrameTransform(
            -self.rotation,
            (-(c * tx + s * ty), -(-s * tx + c * ty)),
            self.to_frame,
            self.from_frame,
        )

    def compose(self, inner: "FrameTransform") -> "FrameTransform":
        """self after inner: maps inner.from_frame to self.to_frame."""
        if inner.to_frame != self.from_frame:
            raise FrameError(
                f"cannot compose {self.from_frame}->{self.to_frame} "
                f"after {inner.from_frame}->{inner.to_frame}"
            )
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        ix, iy = inner.translation
        tx, ty = self.translation
        return FrameTransform(
            self.rotation + inner.rotation,
            (c * ix - s * iy + tx, s * ix + c * iy + ty),
            inner.from_frame,
            self.to_frame,
        )


def apply_transform(
    t: FrameTransform, p: tuple[float, float], frame: str | None = None
) -> tuple[float, float]:
    """Express point ``p`` (in ``t.from_frame``) in ``t.to_frame``.

    ``frame`` optionally asserts which frame the caller believes the point
    is in; a mismatch raises :class:`FrameError`.
    """
    if frame is not None and frame != t.from_frame:
        raise FrameError(f"point in frame {frame!r}, transform expects {t.from_frame!r}")
    c, s = math.cos(t.rotation), math.sin(t.rotation)
    x, y = p
    return (c * x - s * y + t.translation[0], s * x + c * y + t.translation[1])


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera rigidly mounted on the robot, looking forward.

    The camera center sits above the robot origin at ``mount_height`` and
    pitches downward by ``mount_pitch`` (positive = down). With a flat
    ground plane this induces an invertible homography between in-view
    ground points and pixels, which is all the stack needs.
    """

    focal_px: float
    image_size: tuple[int, int]
    principal_point: tuple[float, float]
    mount_height: float
    mount_pitch: float = 0.0
    theta_fov: float = math.radians(45.0)

    def __post_init__(self):
        if self.focal_px <= 0:
            raise ValueError("focal_px must be positive")
        if not (0.0 < self.theta_fov < math.pi / 2):
            raise ValueError("theta_fov must be in (0, pi/2)")
        if self.mount_height <= 0:
            raise ValueError("mount_height must be positive")

    @property
    def width(self) -> int:
        return self.image_size[0]

    @property
    def height(self) -> int:
        return self.image_size[1]

    def _axes(self) -> tuple[tuple, tuple, tuple]:
        """Camera basis vectors (right, down, optical) in robot 3D coords."""
        cp, sp = math.cos(self.mount_pitch), math.sin(self.mount_pitch)
        right = (0.0, -1.0, 0.0)
        down = (-sp, 0.0, -cp)
        optical = (cp, 0.0, -sp)
        return right, down, optical


def project_ground_to_pixel(
    cam: CameraModel, p_robot: tuple[float, float]
) -> tuple[float, float] | None:
    """Project a robot-frame ground point (z=0) to a pixel.

    Returns None when the point is behind the camera, outside the
    horizontal field of view, or outside the image bounds.
    """
    x, y = p_robot
    right, down, optical = cam._axes()
    # vector from camera center (0, 0, mount_height) to the ground point
    d = (x, y, -cam.mount_height)
    xc = right[0] * d[0] + right[1] * d[1] + right[2] * d[2]
    yc = down[0] * d[0] + down[1] * d[1] + down[2] * d[2]
    zc = optical[0] * d[0] + optical[1] * d[1] + optical[2] * d[2]
    if zc <= 1e-9:
        return None
    if abs(math.atan2(xc, zc)) > cam.theta_fov:
        return None
    u = cam.principal_point[0] + cam.focal_px * xc / zc
    v = cam.principal_point[1] + cam.focal_px * yc / zc
    if not (0.0 <= u < cam.width and 0.0 <= v < cam.height):
        return None
    return (u, v)


def pixel_to_ground(
    cam: CameraModel, px: tuple[float, float]
) -> tuple[float, float] | None:
    """Intersect a pixel's viewing ray with the ground plane.

    Returns None for pixels at or above the horizon (ray not pointing
    downward). Inverse of :func:`project_ground_to_pixel` for in-view
    ground points.
    """
    u, v = px
    right, down, optical = cam._axes()
    a = (u - cam.principal_point[0]) / cam.focal_px
    b = (v - cam.principal_point[1]) / cam.focal_px
    # ray direction in robot 3D coords
    dx = a * right[0] + b * down[0] + optical[0]
    dy = a * right[1] + b * down[1] + optical[1]
    dz = a * right[2] + b * down[2] + optical[2]
    if dz >= -1e-12:
        return None
    t = cam.mount_height / -dz
    return (t * dx, t * dy)


def ground_horizon_v(cam: CameraModel) -> float:
    """Image row of the ground horizon: pixels strictly below it have
    downward-pointing rays that intersect the ground plane."""
    # ray dz = a*right_z + b*down_z + optical_z with right_z = 0, so the
    # horizon (dz = 0) depends only on the row coordinate
    _, down, optical = cam._axes()
    if down[2] == 0.0:
        return -math.inf if optical[2] >= 0 else math.inf
    return cam.principal_point[1] - optical[2] / down[2] * cam.focal_px
