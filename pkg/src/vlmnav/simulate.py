"""Closed-loop scenario execution: sensor simulation, control, logging.

One Simulation owns the mutable robot/world clock; controllers consume
immutable per-tick snapshots and return velocity commands. Runs are fully
deterministic for a given scenario and backend (pedestrians are pure
functions of the tick clock, the oracle backends are pure functions of
world state, and VLM replies apply at tick boundaries).
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field, replace

import numpy as np

from .context import OracleContextClassifier
from .geometry import FrameTransform
from .mapping import simulate_lidar_to_grid
from .navigator import Navigator, NavigatorConfig, QueryDecision, SensorSnapshot
from .planner import plan
from .runlog import QueryEvent, RunLogHeader, RunLogRecord
from .rendering import render_camera
from .scenario import Scenario
from .vlm import OracleVlmBackend
from .world import robot_in_collision, step_kinematics

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_COLLISION = 3
EXIT_TICK_LIMIT = 4


class Simulation:
    """Steps the world and robot at the scenario tick rate."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.world = scenario.world
        self.state = scenario.robot
        self.tick = 0
        self.collided = False
        self._image = None
        self._image_tick = -1

    @property
    def time(self) -> float:
        return self.tick / self.scenario.tick_rate

    def _render(self) -> np.ndarray:
        if self._image_tick != self.tick:
            self._image = render_camera(
                self.world, self.state.pose, self.scenario.cam, t=self.time
            )
            self._image_tick = self.tick
        return self._image

    def snapshot(self) -> SensorSnapshot:
        grid = simulate_lidar_to_grid(
            self.world,
            self.state.pose,
            self.scenario.grid_n,
            self.scenario.grid_resolution,
            self.state.radius,
            rays=self.scenario.lidar_rays,
            max_range=self.scenario.lidar_max_range,
            t=self.time,
        )
        return SensorSnapshot(
            tick=self.tick,
            time=self.time,
            pose=self.state.pose,
            v=self.state.v,
            omega=self.state.omega,
            grid=grid,
            image_provider=self._render,
            goal_odom=self.world.goal,
        )

    def step(self, cmd: tuple[float, float]) -> None:
        self.state = step_kinematics(self.state, cmd, 1.0 / self.scenario.tick_rate)
        self.tick += 1
        if robot_in_collision(self.world, self.state.pose, self.state.radius, self.time):
            self.collided = True

    def goal_reached(self) -> bool:
        return (
            math.dist(self.state.pose.position, self.world.goal)
            <= self.scenario.goal_tolerance
        )


def make_oracle_stack(scenario: Scenario, sim: Simulation):
    """Ground-truth classifier and VLM backend wired to the live sim clock."""
    classifier = OracleContextClassifier(
        scenario.world, lambda: (sim.state.pose.x, sim.state.pose.y)
    )
    backend = OracleVlmBackend(scenario.world, time_provider=lambda: sim.time)
    return classifier, backend


@dataclass
class RunResult:
    exit_code: int
    header: RunLogHeader
    records: list[RunLogRecord] = field(default_factory=list)
    marked_images: dict[str, np.ndarray] = field(default_factory=dict)
    reference_paths: list[tuple[tuple[tuple[float, float], ...], float]] = field(
        default_factory=list
    )
    query_count: int = 0
    tick_wall_times: list[float] = field(default_factory=list)

    @property
    def reached_goal(self) -> bool:
        return self.exit_code == EXIT_OK

    @property
    def collided(self) -> bool:
        return self.exit_code == EXIT_COLLISION

    @property
    def poses(self) -> list[tuple[float, float, float]]:
        return [r.pose for r in self.records]


def _baseline_command(snapshot: SensorSnapshot, scenario: Scenario) -> tuple[float, float]:
    to_robot = FrameTransform.from_pose(snapshot.pose).invert()
    c, s = math.cos(to_robot.rotation), math.sin(to_robot.rotation)
    tx, ty = to_robot.translation
    gx, gy = snapshot.goal_odom
    goal_robot = (c * gx - s * gy + tx, s * gx + c * gy + ty)
    return plan(
        (snapshot.v, snapshot.omega), snapshot.grid, goal_robot, None, scenario.planner
    )


def run_scenario(
    scenario: Scenario,
    method: str = "vlm",
    classifier=None,
    vlm_backend=None,
    extrapolation: bool | None = None,
    marker_filter: bool | None = None,
    context_prompting: bool | None = None,
    source: str | None = None,
) -> RunResult:
    """Run one scenario to goal, collision, or the tick limit.

    ``method`` is "vlm" (full pipeline) or "baseline" (plain dynamic
    window, no VLM). Backends default to the oracle stack. ``extrapolation``,
    ``marker_filter``, and ``context_prompting`` override the scenario's navigator switches
    (ablation studies).
    """
    if method not in ("vlm", "baseline"):
        raise ValueError(f"unknown method {method!r}")
    sim = Simulation(scenario)
    nav_cfg = scenario.nav
    overrides = {}
    if extrapolation is not None:
        overrides["extrapolation_enabled"] = extrapolation
    if marker_filter is not None:
        overrides["marker_filter_enabled"] = marker_filter
    if context_prompting is not None:
        overrides["context_prompting_enabled"] = context_prompting
    if overrides:
        nav_cfg = replace(nav_cfg, **overrides)

    navigator = None
    if method == "vlm":
        if classifier is None or vlm_backend is None:
            oracle_classifier, oracle_backend = make_oracle_stack(scenario, sim)
            classifier = classifier or oracle_classifier
            vlm_backend = vlm_backend or oracle_backend
        navigator = Navigator(
            cam=scenario.cam,
            catalog=scenario.catalog,
            classifier=classifier,
            vlm_backend=vlm_backend,
            nav_cfg=nav_cfg,
            planner_cfg=scenario.planner,
        )

    header = RunLogHeader(
        scenario=scenario.name,
        source=source or method,
        seed=scenario.seed,
        tick_rate=scenario.tick_rate,
        goal=scenario.world.goal,
        start_pose=(scenario.robot.pose.x, scenario.robot.pose.y, scenario.robot.pose.theta),
    )
    result = RunResult(exit_code=EXIT_TICK_LIMIT, header=header)
    last_path_key = None

    try:
        while sim.tick < scenario.tick_limit:
            wall_start = _time.perf_counter()
            snapshot = sim.snapshot()
            query_started = None
            query_completed = None
            if navigator is not None:
                tick_result = navigator.tick(snapshot)
                cmd = tick_result.command
                decision = tick_result.decision.value
                estimate = tick_result.estimate
                path = tick_result.path
                if tick_result.query_start is not None:
                    qs = tick_result.query_start
                    result.marked_images[qs.request_id] = qs.marked_image
                    query_started = QueryEvent(
                        request_id=qs.request_id,
                        phase="started",
                        prompt=qs.prompt,
                        marker_labels=qs.marker_labels,
                        image_file=f"marked_{qs.request_id}.png",
                        context_id=qs.context_id,
                    )
                if tick_result.query_completion is not None:
                    qc = tick_result.query_completion
                    query_completed = QueryEvent(
                        request_id=qc.request_id,
                        phase="completed",
                        markers=qc.markers,
                        raw_text=qc.raw_text,
                        latency=qc.latency,
                        error=qc.error,
                    )
            else:
                cmd = _baseline_command(snapshot, scenario)
                decision = QueryDecision.FALLBACK_BASELINE.value
                estimate = None
                path = None

            path_id = path.path_id if path is not None else None
            path_key = (path_id, len(path.points_odom)) if path is not None else None
            path_points = None
            if path is not None and path_key != last_path_key:
                path_points = path.points_odom
                result.reference_paths.append((path.points_odom, sim.time))
            last_path_key = path_key

            record = RunLogRecord(
                tick=sim.tick,
                wall_time=_time.time(),
                pose=(snapshot.pose.x, snapshot.pose.y, snapshot.pose.theta),
                cmd_v=cmd[0],
                cmd_omega=cmd[1],
                state_v=snapshot.v,
                state_omega=snapshot.omega,
                decision=decision,
                path_id=path_id,
                path_points=path_points,
                context_id=estimate.context_id if estimate is not None else None,
                context_probs=estimate.probabilities if estimate is not None else None,
                query_started=query_started,
                query_completed=query_completed,
            )
            sim.step(cmd)
            if sim.collided:
                record = replace(record, collision=True)
            result.records.append(record)
            result.tick_wall_times.append(_time.perf_counter() - wall_start)
            if sim.collided:
                result.exit_code = EXIT_COLLISION
                break
            if sim.goal_reached():
                result.exit_code = EXIT_OK
                break
    finally:
        if navigator is not None:
            result.query_count = navigator.query_count
            navigator.close()
    return result


def replay_commands(
    scenario: Scenario, commands: list[tuple[float, float]]
) -> list[tuple[float, float, float]]:
    """Re-simulate a logged command stream; returns the pose at each tick
    (pose before applying that tick's command), matching run logs."""
    sim = Simulation(scenario)
    poses = []
    for cmd in commands:
        poses.append((sim.state.pose.x, sim.state.pose.y, sim.state.pose.theta))
        sim.step(cmd)
    return poses
