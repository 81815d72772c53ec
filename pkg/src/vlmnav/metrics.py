"""Trajectory and reference-path evaluation metrics.

All polylines are sequences of (x, y) in a shared frame. The discrete
Fréchet distance uses the standard dynamic program over monotone couplings
and is exercised against an exhaustive-coupling oracle in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from shapely.geometry import Point, Polygon

from .world import SemanticWorld, TerrainClass, semantic_at

Polyline = Sequence[tuple[float, float]]


@dataclass(frozen=True)
class RecordedTrajectory:
    """Time-ordered pose samples from a run log."""

    times: tuple[float, ...]
    points: tuple[tuple[float, float], ...]
    velocities: tuple[float, ...]
    source: str = "scripted"  # vlm | baseline | teleop | scripted

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("timestamps must be strictly increasing")
        if len(self.times) != len(self.points) or len(self.times) != len(self.velocities):
            raise ValueError("times, points, and velocities must align")


@dataclass(frozen=True)
class MetricsReport:
    frechet: float | None
    norm_traj_length: float
    mean_velocity: float
    ref_path_error: float | None
    cosine_similarity: float | None
    pct_unacceptable: float | None
    query_count: int


def arc_length(points: Polyline) -> float:
    return sum(math.dist(a, b) for a, b in zip(points, points[1:]))


def discrete_frechet(a: Polyline, b: Polyline) -> float:
    """Discrete Fréchet distance via dynamic programming.

    Minimum over monotone couplings of the maximum paired distance;
    symmetric and at least the larger endpoint distance.
    """
    if len(a) == 0 or len(b) == 0:
        raise ValueError("polylines must be nonempty")
    pa = np.asarray(a, dtype=float)
    pb = np.asarray(b, dtype=float)
    diff = pa[:, None, :] - pb[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=2))
    n, m = d.shape
    dp = np.empty((n, m))
    dp[0, 0] = d[0, 0]
    for j in range(1, m):
        dp[0, j] = max(dp[0, j - 1], d[0, j])
    for i in range(1, n):
        dp[i, 0] = max(dp[i - 1, 0], d[i, 0])
        for j in range(1, m):
            dp[i, j] = max(min(dp[i - 1, j], dp[i - 1, j - 1], dp[i, j - 1]), d[i, j])
    return float(dp[n - 1, m - 1])


def norm_traj_length(
    points: Polyline, start: tuple[float, float], goal: tuple[float, float]
) -> float:
    """Trajectory arc length over the straight-line start-goal distance."""
    straight = math.dist(start, goal)
    if straight <= 0.0:
        raise ValueError("start and goal coincide; normalization undefined")
    return arc_length(points) / straight


def mean_velocity(traj: RecordedTrajectory) -> float:
    """Commanded linear speed averaged over ticks."""
    if not traj.velocities:
        return 0.0
    return float(np.mean(np.abs(traj.velocities)))


def centroid(points: Polyline) -> tuple[float, float]:
    arr = np.asarray(points, dtype=float)
    return (float(arr[:, 0].mean()), float(arr[:, 1].mean()))


def ref_path_error(gt: Polyline, ref: Polyline) -> float:
    """Distance between the two path centroids."""
    if len(gt) == 0 or len(ref) == 0:
        raise ValueError("paths must be nonempty")
    cg, cr = centroid(gt), centroid(ref)
    return math.dist(cg, cr)


def cosine_similarity(gt: Polyline, ref: Polyline) -> float:
    """Cosine between the end-to-end displacement vectors of the two paths."""
    gv = (gt[-1][0] - gt[0][0], gt[-1][1] - gt[0][1])
    rv = (ref[-1][0] - ref[0][0], ref[-1][1] - ref[0][1])
    ng, nr = math.hypot(*gv), math.hypot(*rv)
    if ng <= 0.0 or nr <= 0.0:
        raise ValueError("degenerate path: zero end-to-end displacement")
    return (gv[0] * rv[0] + gv[1] * rv[1]) / (ng * nr)


@dataclass(frozen=True)
class AcceptabilityPolicy:
    """Which terrain classes count as unacceptable for a scenario."""

    unacceptable_terrain: frozenset[TerrainClass] = frozenset()


def path_unacceptable(
    points_odom: Polyline,
    world: SemanticWorld,
    policy: AcceptabilityPolicy,
    t: float = 0.0,
) -> bool:
    """A path is unacceptable if any point is inside an obstacle, inside a
    pedestrian disk, or on terrain the policy forbids."""
    polys = [Polygon(o) for o in world.static_obstacles]
    peds = world.pedestrian_states(t)
    for p in points_odom:
        pt = Point(p)
        if any(poly.covers(pt) for poly in polys):
            return True
        if any(math.dist(p, pos) <= radius for pos, radius, _ in peds):
            return True
        if semantic_at(world, p) in policy.unacceptable_terrain:
            return True
    return False


def pct_unacceptable(
    paths: Sequence[tuple[Polyline, float]],
    world: SemanticWorld,
    policy: AcceptabilityPolicy,
) -> float:
    """Fraction of (path, creation_time) entries that violate the policy."""
    if not paths:
        return 0.0
    bad = sum(
        1 for points, t in paths if path_unacceptable(points, world, policy, t)
    )
    return bad / len(paths)
