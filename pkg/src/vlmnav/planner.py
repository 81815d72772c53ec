"""Dynamic-window velocity planner with goal, obstacle, velocity, and
reference-path costs.

All planning happens in the robot frame, which coincides with the grid
frame of the robot-centric occupancy map. The planner is an exhaustive
argmin over the sampled velocity window; every cost term is normalized to
[0, 1] before weighting so the configured weights transfer across worlds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .geometry import wrap_angle
from .mapping import OccupancyGrid, supercover_line


@dataclass(frozen=True)
class PlannerConfig:
    alpha_1: float = 10.0  # heading-to-goal weight
    alpha_2: float = 7.0  # obstacle clearance weight
    alpha_3: float = 1.0  # forward velocity weight
    alpha_4: float = 7.5  # reference path weight
    v_max: float = 0.3
    omega_max: float = 1.0
    accel_lin: float = 0.5
    accel_ang: float = 1.5
    dt: float = 0.2
    t_hor: float = 2.0
    v_samples: int = 7
    omega_samples: int = 15
    theta_fov: float = math.radians(45.0)
    d_clear: float = 2.0  # clearance saturation distance for the obstacle cost

    def __post_init__(self):
        if self.v_samples < 3 or self.omega_samples < 3:
            raise ValueError("need at least 3 samples per axis")
        if not (0 < self.dt < self.t_hor):
            raise ValueError("dt must be positive and smaller than t_hor")
        for name in ("alpha_1", "alpha_2", "alpha_3", "alpha_4"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class Trajectory:
    """Constant-curvature rollout of one (v, omega) command, robot frame."""

    points: tuple[tuple[float, float], ...]
    command: tuple[float, float]


def dynamic_window(
    current: tuple[float, float], cfg: PlannerConfig
) -> list[tuple[float, float]]:
    """Velocity pairs reachable within one dt, as a uniform sample grid.

    Enumeration order is part of the planner contract (ties break toward
    the lowest index): v ascending in the outer loop, omega ascending in
    the inner loop.
    """
    v0, w0 = current
    v_lo = max(0.0, v0 - cfg.accel_lin * cfg.dt)
    v_hi = min(cfg.v_max, v0 + cfg.accel_lin * cfg.dt)
    w_lo = max(-cfg.omega_max, w0 - cfg.accel_ang * cfg.dt)
    w_hi = min(cfg.omega_max, w0 + cfg.accel_ang * cfg.dt)
    vs = np.linspace(v_lo, v_hi, cfg.v_samples)
    ws = np.linspace(w_lo, w_hi, cfg.omega_samples)
    return [(float(v), float(w)) for v in vs for w in ws]


def rollout(v: float, omega: float, cfg: PlannerConfig) -> Trajectory:
    """Positions at dt, 2*dt, ..., t_hor along the constant-curvature arc."""
    steps = int(round(cfg.t_hor / cfg.dt))
    pts = []
    for k in range(1, steps + 1):
        t = k * cfg.dt
        if abs(omega) < 1e-9:
            pts.append((v * t, 0.0))
        else:
            pts.append(
                (v / omega * math.sin(omega * t), v / omega * (1.0 - math.cos(omega * t)))
            )
    return Trajectory(points=tuple(pts), command=(v, omega))


def admissible(traj: Trajectory, grid: OccupancyGrid) -> bool:
    """True iff no cell touched by the trajectory is occupied.

    Cells are collected with a supercover walk along the segments between
    consecutive rollout points (starting at the robot cell); cells outside
    the grid are treated as free.
    """
    prev = grid.robot_cell
    for p in traj.points:
        cell = grid.cell_of(p)
        for c in supercover_line(prev, cell):
            if grid.in_bounds(c) and grid.mask[c[0], c[1]]:
                return False
        prev = cell
    return True


def ref_cost(
    traj: Trajectory, ref: Sequence[tuple[float, float]]
) -> float | None:
    """Lateral distance from the rollout endpoint to the nearest-ahead
    reference point (smallest positive x in the robot frame).

    Returns None when no reference point lies ahead; the caller then plans
    without the reference term.
    """
    ahead = [p for p in ref if p[0] > 0.0]
    if not ahead:
        return None
    target = min(ahead, key=lambda p: p[0])
    return abs(target[1] - traj.points[-1][1])


def _clearance(traj: Trajectory, grid: OccupancyGrid) -> float:
    dist = grid.distance_map()
    best = math.inf
    for p in traj.points:
        cell = grid.cell_of(p)
        if grid.in_bounds(cell):
            best = min(best, float(dist[cell[0], cell[1]]))
    return best


def q1_cost(
    traj: Trajectory,
    goal: tuple[float, float],
    grid: OccupancyGrid,
    cfg: PlannerConfig,
    sigma: Callable[[float], float] | None = None,
) -> float:
    """Weighted sum of normalized heading, obstacle, and velocity costs.

    The heading term measures misalignment with the goal at the pose
    reached after one control interval (position of the first rollout
    point, orientation rotated by omega*dt), so a turn is penalized in
    proportion to one interval's rotation rather than the full horizon's.
    Obstacle cost saturates at d_clear; all three terms live in [0, 1].
    """
    v, omega = traj.command
    px, py = traj.points[0]
    to_goal = math.atan2(goal[1] - py, goal[0] - px)
    head = abs(wrap_angle(to_goal - omega * cfg.dt)) / math.pi
    clear = _clearance(traj, grid)
    obs = 1.0 - min(clear, cfg.d_clear) / cfg.d_clear
    vel = 1.0 - v / cfg.v_max
    raw = cfg.alpha_1 * head + cfg.alpha_2 * obs + cfg.alpha_3 * vel
    return sigma(raw) if sigma is not None else raw


def _stop_command(grid: OccupancyGrid, cfg: PlannerConfig) -> tuple[float, float]:
    """Degenerate fallback: halt and rotate toward the clearest bearing."""
    dist = grid.distance_map()
    best_bearing, best_clear = 0.0, -math.inf
    for bearing in np.linspace(-math.pi, math.pi, 17)[:-1]:
        probe = (0.8 * math.cos(bearing), 0.8 * math.sin(bearing))
        cell = grid.cell_of(probe)
        if not grid.in_bounds(cell):
            continue
        c = float(dist[cell[0], cell[1]])
        if c > best_clear:
            best_clear, best_bearing = c, float(bearing)
    if abs(best_bearing) < 1e-9:
        return (0.0, 0.0)
    return (0.0, math.copysign(cfg.omega_max, best_bearing))


def plan(
    current: tuple[float, float],
    grid: OccupancyGrid,
    goal: tuple[float, float],
    ref: Sequence[tuple[float, float]] | None,
    cfg: PlannerConfig,
    sigma: Callable[[float], float] | None = None,
) -> tuple[float, float]:
    """Pick the admissible (v, omega) minimizing the planning objective.

    The reference term is added only when a reference path is given, it has
    a point ahead of the robot, and the goal bearing lies within the camera
    field of view; otherwise planning degrades to the plain objective.
    Returns the stop command when no window sample is admissible.
    """
    theta_goal = math.atan2(goal[1], goal[0])
    use_ref = ref is not None and abs(theta_goal) <= cfg.theta_fov
    best_cmd: tuple[float, float] | None = None
    best_q = math.inf
    for v, w in dynamic_window(current, cfg):
        traj = rollout(v, w, cfg)
        if not admissible(traj, grid):
            continue
        q = q1_cost(traj, goal, grid, cfg, sigma=sigma)
        if use_ref:
            rc = ref_cost(traj, ref)
            if rc is not None:
                q += cfg.alpha_4 * rc
        if q < best_q:
            best_q = q
            best_cmd = (v, w)
    if best_cmd is None:
        return _stop_command(grid, cfg)
    return best_cmd
