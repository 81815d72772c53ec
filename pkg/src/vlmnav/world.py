"""Deterministic 2D world model: semantic terrain, obstacles, pedestrians.

All geometry lives in the odom frame. Pedestrians follow scripted waypoint
loops at constant speed, so their position at any simulation time is a pure
function of the script and the time; nothing in the world is stochastic.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from shapely.geometry import Point, Polygon

from .geometry import Pose2D, wrap_angle


class TerrainClass(enum.Enum):
    PAVEMENT = "pavement"
    GRASS = "grass"
    GRAVEL = "gravel"
    ASPHALT_ROAD = "asphalt_road"
    CROSSWALK = "crosswalk"
    INDOOR_FLOOR = "indoor_floor"
    UNKNOWN = "unknown"


PAVED_CLASSES = frozenset(
    {TerrainClass.PAVEMENT, TerrainClass.CROSSWALK, TerrainClass.INDOOR_FLOOR}
)


@dataclass(frozen=True)
class TerrainRegion:
    polygon: tuple[tuple[float, float], ...]
    terrain: TerrainClass
    context: str | None = None  # ground-truth context label for oracle backends

    def shapely(self) -> Polygon:
        return Polygon(self.polygon)


@dataclass(frozen=True)
class Pedestrian:
    """Disk pedestrian on an optional constant-speed waypoint loop."""

    position: tuple[float, float]
    radius: float
    speed: float = 0.0
    waypoints: tuple[tuple[float, float], ...] = ()
    group: int | None = None

    def position_at(self, t: float) -> tuple[float, float]:
        """Pure function of time: walks position -> waypoints -> position, looped."""
        if self.speed <= 0.0 or not self.waypoints:
            return self.position
        loop = [self.position, *self.waypoints, self.position]
        lengths = [
            math.dist(loop[i], loop[i + 1]) for i in range(len(loop) - 1)
        ]
        total = sum(lengths)
        if total <= 0.0:
            return self.position
        s = (self.speed * t) % total
        for (a, b), seg in zip(zip(loop, loop[1:]), lengths):
            if s <= seg:
                if seg == 0.0:
                    return a
                f = s / seg
                return (a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]))
            s -= seg
        return self.position

    def velocity_at(self, t: float) -> tuple[float, float]:
        if self.speed <= 0.0 or not self.waypoints:
            return (0.0, 0.0)
        eps = 1e-4
        p0 = self.position_at(t)
        p1 = self.position_at(t + eps)
        return ((p1[0] - p0[0]) / eps, (p1[1] - p0[1]) / eps)


@dataclass(frozen=True)
class DetourSign:
    """Sign directing traffic around a blockade; direction is 'left' or 'right'."""

    position: tuple[float, float]
    direction: str

    def __post_init__(self):
        if self.direction not in ("left", "right"):
            raise ValueError("sign direction must be 'left' or 'right'")


@dataclass
class SemanticWorld:
    """Ground-truth world: terrain regions, convex obstacles, pedestrians, goal.

    Later-declared terrain regions override earlier ones. ``context`` labels
    on regions are ground truth for the oracle context classifier.
    """

    terrain_regions: list[TerrainRegion] = field(default_factory=list)
    static_obstacles: list[tuple[tuple[float, float], ...]] = field(default_factory=list)
    pedestrians: list[Pedestrian] = field(default_factory=list)
    goal: tuple[float, float] = (0.0, 0.0)
    signs: list[DetourSign] = field(default_factory=list)
    obstacle_height: float = 2.0
    pedestrian_height: float = 1.7

    def __post_init__(self):
        for region in self.terrain_regions:
            poly = region.shapely()
            if not poly.is_valid:
                raise ValueError("terrain region polygon is self-intersecting")
        for obs in self.static_obstacles:
            if not Polygon(obs).is_valid:
                raise ValueError("obstacle polygon is self-intersecting")
        for ped in self.pedestrians:
            if ped.radius <= 0:
                raise ValueError("pedestrian radius must be positive")
        for obs in self.static_obstacles:
            if Polygon(obs).contains(Point(self.goal)):
                raise ValueError("goal lies inside a static obstacle")

    def obstacle_polygons(self) -> list[Polygon]:
        return [Polygon(o) for o in self.static_obstacles]

    def pedestrian_states(self, t: float) -> list[tuple[tuple[float, float], float, int | None]]:
        """(position, radius, group) for every pedestrian at time ``t``."""
        return [(p.position_at(t), p.radius, p.group) for p in self.pedestrians]


def semantic_at(world: SemanticWorld, p: tuple[float, float]) -> TerrainClass:
    """Terrain class of the last-declared region containing ``p`` (else UNKNOWN)."""
    pt = Point(p)
    for region in reversed(world.terrain_regions):
        if region.shapely().covers(pt):
            return region.terrain
    return TerrainClass.UNKNOWN


def context_at(world: SemanticWorld, p: tuple[float, float]) -> str | None:
    """Declared context label at ``p``: last-declared labeled region wins."""
    pt = Point(p)
    for region in reversed(world.terrain_regions):
        if region.context is not None and region.shapely().covers(pt):
            return region.context
    return None


@dataclass(frozen=True)
class RobotState:
    """Robot pose plus velocity state and motion limits."""

    pose: Pose2D
    v: float = 0.0
    omega: float = 0.0
    radius: float = 0.3
    v_max: float = 0.3
    omega_max: float = 1.0
    accel_lin: float = 0.5
    accel_ang: float = 1.5


def step_kinematics(
    state: RobotState, cmd: tuple[float, float], dt: float
) -> RobotState:
    """Advance unicycle kinematics by one tick.

    The commanded (v, omega) is clamped to the acceleration limits reachable
    within ``dt`` and then to the velocity limits; the pose then advances
    along a constant-curvature arc at the clamped velocity.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    cmd_v, cmd_w = cmd
    dv = state.accel_lin * dt
    dw = state.accel_ang * dt
    v = min(max(cmd_v, state.v - dv), state.v + dv)
    w = min(max(cmd_w, state.omega - dw), state.omega + dw)
    v = min(max(v, -state.v_max), state.v_max)
    w = min(max(w, -state.omega_max), state.omega_max)

    x, y, theta = state.pose.x, state.pose.y, state.pose.theta
    if abs(w) < 1e-6:
        x += v * math.cos(theta) * dt
        y += v * math.sin(theta) * dt
        theta = wrap_angle(theta + w * dt)
    else:
        theta_new = theta + w * dt
        x += (v / w) * (math.sin(theta_new) - math.sin(theta))
        y -= (v / w) * (math.cos(theta_new) - math.cos(theta))
        theta = wrap_angle(theta_new)
    pose = Pose2D(x, y, theta, frame=state.pose.frame)
    return RobotState(
        pose=pose,
        v=v,
        omega=w,
        radius=state.radius,
        v_max=state.v_max,
        omega_max=state.omega_max,
        accel_lin=state.accel_lin,
        accel_ang=state.accel_ang,
    )


def robot_in_collision(world: SemanticWorld, pose: Pose2D, radius: float, t: float) -> bool:
    """True when the robot disk overlaps any obstacle or pedestrian disk."""
    center = Point(pose.x, pose.y)
    for poly in world.obstacle_polygons():
        if poly.distance(center) < radius:
            return True
    for pos, r, _ in world.pedestrian_states(t):
        if math.dist((pose.x, pose.y), pos) < radius + r:
            return True
    return False
