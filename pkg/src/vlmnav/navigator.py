"""Closed-loop orchestration: marker generation, context classification,
asynchronous VLM querying, reference-path lifting, extrapolation, and
re-query gating.

The navigator never blocks the control tick on a pending VLM request; at
most one request is in flight, issued to a single worker thread, and its
result is applied at the next tick boundary. While a request is pending
the robot keeps following its current path, or plans with the baseline
objective when it has none.
"""

from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .context import (
    ClassifierError,
    ContextCatalog,
    ContextEstimate,
    build_behavior_prompt,
    build_combined_prompt,
    classify_context,
    classify_patch_paved,
)
from .geometry import CameraModel, FrameTransform, Pose2D, project_ground_to_pixel
from .mapping import OccupancyGrid
from .marking import CandidateLayout, MarkerSet, annotate_image, build_marker_set, line_of_sight_free
from .planner import PlannerConfig, plan
from .rendering import crop_patch
from .vlm import VlmError, VlmRequest, VlmResponse, query_reference

logger = logging.getLogger(__name__)


class UnknownLabelError(KeyError):
    """A reference marker is not present in the marker set (parser drift guard)."""


class DegenerateFitError(ValueError):
    """All path points coincide; no extrapolation direction exists."""


class QueryDecision(enum.Enum):
    FOLLOW_CURRENT = "follow_current"
    EXTRAPOLATE = "extrapolate"
    REQUERY_LARGE_VLM = "requery_large_vlm"
    FALLBACK_BASELINE = "fallback_baseline"


@dataclass(frozen=True)
class NavigatorConfig:
    layout: CandidateLayout
    d_thresh: float = 4.0
    t_query: float = 5.0
    v_max: float = 0.3
    n_pat: int = 200
    tick_rate: float = 10.0
    extrapolation_enabled: bool = True
    requery_cooldown: float = 1.0  # seconds to wait after a failed query
    query_timeout: float = 15.0
    # ablation switches: marker obstacle filtering and per-context prompting
    marker_filter_enabled: bool = True
    context_prompting_enabled: bool = True

    def __post_init__(self):
        if self.d_thresh <= 0 or self.t_query <= 0 or self.tick_rate <= 0:
            raise ValueError("d_thresh, t_query, and tick_rate must be positive")
        expected = self.v_max * self.t_query
        ratio = self.d_thresh / expected if expected > 0 else math.inf
        # d_thresh should approximate v_max * t_query: the distance covered
        # while one query is in flight
        if ratio > 2.0 or ratio < 0.5:
            logger.warning(
                "d_thresh=%.2f m is far from v_max*t_query=%.2f m (ratio %.2f)",
                self.d_thresh,
                expected,
                ratio,
            )


@dataclass(frozen=True)
class ReferencePath:
    """VLM-selected waypoints, stored in the odom frame and re-derived into
    the robot frame every tick as the robot moves."""

    points_odom: tuple[tuple[float, float], ...]
    points_grid: tuple[tuple[int, int], ...]  # cells at creation
    source_markers: tuple[int, ...]
    context_at_creation: str
    created_tick: int
    created_pose: tuple[float, float, float]
    path_id: int = 0

    def __post_init__(self):
        if not self.points_odom:
            raise ValueError("reference path must be nonempty")

    def points_robot(self, pose: Pose2D) -> list[tuple[float, float]]:
        to_robot = FrameTransform.from_pose(pose).invert()
        c, s = math.cos(to_robot.rotation), math.sin(to_robot.rotation)
        tx, ty = to_robot.translation
        return [(c * x - s * y + tx, s * x + c * y + ty) for x, y in self.points_odom]

    @property
    def last_point_odom(self) -> tuple[float, float]:
        return self.points_odom[-1]


def lift_markers_to_path(
    markers: tuple[int, ...] | list[int],
    ms: MarkerSet,
    context_id: str,
    pose: Pose2D,
    tick: int,
    path_id: int = 0,
) -> ReferencePath:
    """Resolve marker labels to waypoints sorted by forward distance.

    Raises :class:`UnknownLabelError` for labels outside the marker set.
    """
    entries = []
    for label in markers:
        try:
            entries.append(ms.by_label(label))
        except KeyError as exc:
            raise UnknownLabelError(f"label {label} not in marker set") from exc
    entries.sort(key=lambda e: (e.ground_point[0], e.label))
    to_odom = FrameTransform.from_pose(pose)
    c, s = math.cos(to_odom.rotation), math.sin(to_odom.rotation)
    tx, ty = to_odom.translation
    points_odom = tuple(
        (c * e.ground_point[0] - s * e.ground_point[1] + tx,
         s * e.ground_point[0] + c * e.ground_point[1] + ty)
        for e in entries
    )
    return ReferencePath(
        points_odom=points_odom,
        points_grid=tuple(e.grid_cell for e in entries),
        source_markers=tuple(e.label for e in entries),
        context_at_creation=context_id,
        created_tick=tick,
        created_pose=(pose.x, pose.y, pose.theta),
        path_id=path_id,
    )


def extrapolate_path(
    points_robot: list[tuple[float, float]], d_row: float
) -> tuple[float, float]:
    """Extend the path by d_row along its total-least-squares line fit.

    The extension starts at the path's far end (points are ordered by
    forward distance at creation) and runs along the fit direction oriented
    with the path, away from the robot. Single-point paths use the
    robot-to-point direction.
    """
    if not points_robot:
        raise DegenerateFitError("empty path")
    pts = np.asarray(points_robot, dtype=float)
    end = pts[-1]
    if len(pts) == 1:
        norm = float(np.hypot(end[0], end[1]))
        if norm < 1e-9:
            raise DegenerateFitError("single path point at the robot origin")
        direction = end / norm
    else:
        centered = pts - pts.mean(axis=0)
        if float(np.abs(centered).max()) < 1e-12:
            raise DegenerateFitError("all path points coincide")
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        direction = vt[0]
        # orient along the path: first point toward last point
        along = end - pts[0]
        dot = float(np.dot(direction, along))
        if dot < 0 or (dot == 0 and float(np.dot(direction, end)) < 0):
            direction = -direction
    return (float(end[0] + d_row * direction[0]), float(end[1] + d_row * direction[1]))


def validate_extrapolation(
    p_robot: tuple[float, float],
    grid: OccupancyGrid,
    classifier,
    cam: CameraModel,
    n_pat: int,
    image: np.ndarray | None,
    pose: Pose2D,
) -> bool:
    """Three gates: obstacle-free line of sight, in-view projection, and a
    paved verdict on the image patch around the projected pixel."""
    cell = grid.cell_of(p_robot)
    if not grid.in_bounds(cell):
        return False
    if not line_of_sight_free(grid, cell):
        return False
    pixel = project_ground_to_pixel(cam, p_robot)
    if pixel is None:
        return False
    patch = crop_patch(image, pixel, n_pat) if image is not None else None
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    ground_odom = (
        pose.x + c * p_robot[0] - s * p_robot[1],
        pose.y + s * p_robot[0] + c * p_robot[1],
    )
    try:
        return classify_patch_paved(classifier, patch, ground_point_odom=ground_odom)
    except ClassifierError:
        return False


@dataclass(frozen=True)
class SensorSnapshot:
    """One tick's sensor view. ``image`` renders lazily: most ticks never
    need pixels (the oracle backends answer from world state)."""

    tick: int
    time: float
    pose: Pose2D
    v: float
    omega: float
    grid: OccupancyGrid
    image_provider: Callable[[], np.ndarray]
    goal_odom: tuple[float, float]

    def image(self) -> np.ndarray:
        return self.image_provider()


@dataclass(frozen=True)
class QueryStart:
    request_id: str
    prompt: str
    marker_labels: tuple[int, ...]
    marker_pixels: tuple[tuple[float, float], ...]
    marked_image: np.ndarray
    context_id: str


@dataclass(frozen=True)
class QueryCompletion:
    request_id: str
    markers: tuple[int, ...] | None
    raw_text: str | None
    latency: float | None
    error: str | None


@dataclass(frozen=True)
class TickResult:
    command: tuple[float, float]
    decision: QueryDecision
    estimate: ContextEstimate | None
    path: ReferencePath | None
    query_start: QueryStart | None = None
    query_completion: QueryCompletion | None = None


@dataclass
class _PendingQuery:
    future: Future
    request_id: str
    marker_set: MarkerSet
    pose: Pose2D
    estimate: ContextEstimate
    issued_time: float


class Navigator:
    """Drives one robot through the full perceive-prompt-plan loop."""

    def __init__(
        self,
        cam: CameraModel,
        catalog: ContextCatalog,
        classifier,
        vlm_backend,
        nav_cfg: NavigatorConfig,
        planner_cfg: PlannerConfig,
    ):
        self.cam = cam
        self.catalog = catalog
        self.classifier = classifier
        self.vlm_backend = vlm_backend
        self.nav_cfg = nav_cfg
        self.planner_cfg = planner_cfg
        self.path: ReferencePath | None = None
        self.query_count = 0
        self._pending: _PendingQuery | None = None
        self._executor = ThreadPoolExecutor(max_workers=1)
        self._last_failure_time: float | None = None
        self._next_path_id = 1
        self._tick_estimate: ContextEstimate | None = None

    def close(self):
        self._executor.shutdown(wait=False, cancel_futures=True)

    # -- context ---------------------------------------------------------

    def _estimate(self, snapshot: SensorSnapshot) -> ContextEstimate | None:
        """Per-tick cached context estimate.

        Realtime backends classify every tick; remote backends only when a
        decision actually needs the context (see module docstring).
        """
        if self._tick_estimate is not None:
            return self._tick_estimate
        try:
            image = snapshot.image() if getattr(self.classifier, "needs_image", True) else None
            self._tick_estimate = classify_context(
                self.classifier, image, self.catalog, tick=snapshot.tick
            )
        except ClassifierError as exc:
            logger.warning("context classification failed: %s", exc)
            self._tick_estimate = None
        return self._tick_estimate

    # -- pending query handling -------------------------------------------

    def _harvest(self, snapshot: SensorSnapshot) -> QueryCompletion | None:
        if self._pending is None:
            return None
        # instant backends (oracle, scripted) resolve within the inter-tick
        # gap; waiting for them keeps the harvest tick deterministic
        if not self._pending.future.done() and not getattr(
            self.vlm_backend, "instant", False
        ):
            return None
        pending, self._pending = self._pending, None
        try:
            response: VlmResponse = pending.future.result()
        except VlmError as exc:
            self._last_failure_time = snapshot.time
            logger.warning("VLM query %s failed: %s", pending.request_id, exc)
            return QueryCompletion(
                request_id=pending.request_id,
                markers=None,
                raw_text=None,
                latency=None,
                error=f"{type(exc).__name__}: {exc}",
            )
        try:
            self.path = lift_markers_to_path(
                response.markers,
                pending.marker_set,
                pending.estimate.context_id,
                pending.pose,
                snapshot.tick,
                path_id=self._next_path_id,
            )
            self._next_path_id += 1
        except UnknownLabelError as exc:
            self._last_failure_time = snapshot.time
            return QueryCompletion(
                request_id=pending.request_id,
                markers=response.markers,
                raw_text=response.raw_text,
                latency=response.latency,
                error=f"UnknownLabelError: {exc}",
            )
        return QueryCompletion(
            request_id=pending.request_id,
            markers=response.markers,
            raw_text=response.raw_text,
            latency=response.latency,
            error=None,
        )

    def _issue_query(self, snapshot: SensorSnapshot) -> QueryStart | None:
        estimate = self._estimate(snapshot)
        if estimate is None:
            return None
        ms = build_marker_set(
            snapshot.grid,
            self.nav_cfg.layout,
            self.cam,
            tick=snapshot.tick,
            filter_obstructed=self.nav_cfg.marker_filter_enabled,
        )
        if len(ms) == 0:
            return None
        marked = annotate_image(snapshot.image(), ms)
        if self.nav_cfg.context_prompting_enabled:
            prompt = build_behavior_prompt(estimate.behavior)
        else:
            prompt = build_combined_prompt(self.catalog)
        rule = self.catalog.entries[estimate.winner_index].oracle_rule
        request = VlmRequest(
            marked_image=marked,
            prompt=prompt,
            valid_labels=frozenset(e.label for e in ms.entries),
            timeout=self.nav_cfg.query_timeout,
            request_id=f"q{snapshot.tick:06d}",  # tick-derived: logs stay byte-stable
            marker_set=ms,
            behavior_rule=rule,
            robot_pose=(snapshot.pose.x, snapshot.pose.y, snapshot.pose.theta),
        )
        future = self._executor.submit(query_reference, self.vlm_backend, request)
        self._pending = _PendingQuery(
            future=future,
            request_id=request.request_id,
            marker_set=ms,
            pose=snapshot.pose,
            estimate=estimate,
            issued_time=snapshot.time,
        )
        self.query_count += 1
        return QueryStart(
            request_id=request.request_id,
            prompt=prompt,
            marker_labels=tuple(e.label for e in ms.entries),
            marker_pixels=tuple(e.pixel for e in ms.entries),
            marked_image=marked,
            context_id=estimate.context_id,
        )

    # -- decision ----------------------------------------------------------

    def _decide(self, snapshot: SensorSnapshot) -> QueryDecision:
        if self._pending is not None:
            return (
                QueryDecision.FOLLOW_CURRENT
                if self.path is not None
                else QueryDecision.FALLBACK_BASELINE
            )
        in_cooldown = (
            self._last_failure_time is not None
            and snapshot.time - self._last_failure_time < self.nav_cfg.requery_cooldown
        )
        if self.path is None:
            return (
                QueryDecision.FALLBACK_BASELINE
                if in_cooldown
                else QueryDecision.REQUERY_LARGE_VLM
            )
        last = self.path.last_point_odom
        dist = math.dist((snapshot.pose.x, snapshot.pose.y), last)
        if dist >= self.nav_cfg.d_thresh:
            return QueryDecision.FOLLOW_CURRENT
        estimate = self._estimate(snapshot)
        if estimate is None:
            return QueryDecision.FALLBACK_BASELINE
        if (
            estimate.context_id == self.path.context_at_creation
            and self.nav_cfg.extrapolation_enabled
        ):
            if self._try_extrapolate(snapshot):
                return QueryDecision.EXTRAPOLATE
        return (
            QueryDecision.FALLBACK_BASELINE if in_cooldown else QueryDecision.REQUERY_LARGE_VLM
        )

    def _try_extrapolate(self, snapshot: SensorSnapshot) -> bool:
        assert self.path is not None
        try:
            p_robot = extrapolate_path(
                self.path.points_robot(snapshot.pose), self.nav_cfg.layout.d_row
            )
        except DegenerateFitError:
            return False
        ok = validate_extrapolation(
            p_robot,
            snapshot.grid,
            self.classifier,
            self.cam,
            self.nav_cfg.n_pat,
            snapshot.image(),
            snapshot.pose,
        )
        if not ok:
            return False
        c, s = math.cos(snapshot.pose.theta), math.sin(snapshot.pose.theta)
        p_odom = (
            snapshot.pose.x + c * p_robot[0] - s * p_robot[1],
            snapshot.pose.y + s * p_robot[0] + c * p_robot[1],
        )
        cell = snapshot.grid.cell_of(p_robot)
        self.path = replace(
            self.path,
            points_odom=self.path.points_odom + (p_odom,),
            points_grid=self.path.points_grid + (cell,),
        )
        return True

    # -- main tick ---------------------------------------------------------

    def tick(self, snapshot: SensorSnapshot) -> TickResult:
        self._tick_estimate = None
        completion = self._harvest(snapshot)
        decision = self._decide(snapshot)
        query_start = None
        if decision is QueryDecision.REQUERY_LARGE_VLM:
            query_start = self._issue_query(snapshot)
            if query_start is None:
                decision = QueryDecision.FALLBACK_BASELINE

        to_robot = FrameTransform.from_pose(snapshot.pose).invert()
        c, s = math.cos(to_robot.rotation), math.sin(to_robot.rotation)
        tx, ty = to_robot.translation
        gx, gy = snapshot.goal_odom
        goal_robot = (c * gx - s * gy + tx, s * gx + c * gy + ty)
        ref = self.path.points_robot(snapshot.pose) if self.path is not None else None
        command = plan(
            (snapshot.v, snapshot.omega),
            snapshot.grid,
            goal_robot,
            ref,
            self.planner_cfg,
        )
        estimate = self._tick_estimate
        if estimate is None and getattr(self.classifier, "realtime", False):
            estimate = self._estimate(snapshot)
        return TickResult(
            command=command,
            decision=decision,
            estimate=estimate,
            path=self.path,
            query_start=query_start,
            query_completion=completion,
        )
