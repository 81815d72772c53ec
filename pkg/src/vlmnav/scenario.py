"""Scenario files: versioned YAML schema describing the world, the robot,
and every pipeline parameter for a run.

The loader is strict: unknown fields anywhere in the document are rejected
with the offending path, so typos never silently fall back to defaults.
Angles in scenario files are degrees; lengths are meters; the planner's
field-of-view gate is derived from the camera, never configured twice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import yaml

from .context import ContextCatalog, default_catalog, load_catalog
from .geometry import CameraModel, Pose2D
from .marking import CandidateLayout
from .metrics import AcceptabilityPolicy
from .navigator import NavigatorConfig
from .planner import PlannerConfig
from .world import (
    DetourSign,
    Pedestrian,
    RobotState,
    SemanticWorld,
    TerrainClass,
    TerrainRegion,
)

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Schema violation with the field path that caused it."""


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    world: SemanticWorld
    robot: RobotState
    cam: CameraModel
    nav: NavigatorConfig
    planner: PlannerConfig
    grid_n: int
    grid_resolution: float
    lidar_rays: int
    lidar_max_range: float
    tick_rate: float
    tick_limit: int
    goal_tolerance: float
    policy: AcceptabilityPolicy
    catalog: ContextCatalog = field(default_factory=default_catalog)


def _require(doc: dict, path: str, allowed: set[str], required: set[str] = frozenset()):
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: expected a mapping")
    unknown = set(doc) - allowed
    if unknown:
        raise ScenarioError(f"{path}: unknown fields {sorted(unknown)}")
    missing = required - set(doc)
    if missing:
        raise ScenarioError(f"{path}: missing fields {sorted(missing)}")


def _point(value, path: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ScenarioError(f"{path}: expected [x, y]")
    return (float(value[0]), float(value[1]))


def _polygon(value, path: str) -> tuple[tuple[float, float], ...]:
    if not isinstance(value, (list, tuple)) or len(value) < 3:
        raise ScenarioError(f"{path}: polygon needs at least 3 vertices")
    return tuple(_point(v, f"{path}[{i}]") for i, v in enumerate(value))


def load_scenario(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    return parse_scenario(doc, source=path)


def parse_scenario(doc: dict, source: str = "<scenario>") -> Scenario:
    top_allowed = {
        "version", "name", "seed", "robot", "goal", "goal_tolerance", "tick_rate",
        "tick_limit", "grid", "lidar", "camera", "layout", "navigator", "planner",
        "terrain", "obstacles", "pedestrians", "signs", "policy", "catalog_file",
    }
    _require(doc, source, top_allowed, {"version", "name", "robot", "goal", "terrain"})
    if doc["version"] != SCHEMA_VERSION:
        raise ScenarioError(f"{source}: unsupported schema version {doc['version']!r}")

    robot_doc = doc["robot"]
    _require(
        robot_doc,
        "robot",
        {"start", "radius", "v_max", "omega_max", "accel_lin", "accel_ang"},
        {"start"},
    )
    start = robot_doc["start"]
    if not isinstance(start, (list, tuple)) or len(start) != 3:
        raise ScenarioError("robot.start: expected [x, y, theta_deg]")
    v_max = float(robot_doc.get("v_max", 0.3))
    robot = RobotState(
        pose=Pose2D(float(start[0]), float(start[1]), math.radians(float(start[2]))),
        radius=float(robot_doc.get("radius", 0.3)),
        v_max=v_max,
        omega_max=float(robot_doc.get("omega_max", 1.0)),
        accel_lin=float(robot_doc.get("accel_lin", 0.5)),
        accel_ang=float(robot_doc.get("accel_ang", 1.5)),
    )

    regions = []
    for i, item in enumerate(doc["terrain"]):
        _require(item, f"terrain[{i}]", {"polygon", "class", "context"}, {"polygon", "class"})
        try:
            terrain = TerrainClass(item["class"])
        except ValueError as exc:
            raise ScenarioError(f"terrain[{i}].class: {exc}") from exc
        regions.append(
            TerrainRegion(
                polygon=_polygon(item["polygon"], f"terrain[{i}].polygon"),
                terrain=terrain,
                context=item.get("context"),
            )
        )

    obstacles = [
        _polygon(obs, f"obstacles[{i}]") for i, obs in enumerate(doc.get("obstacles", []))
    ]

    pedestrians = []
    for i, item in enumerate(doc.get("pedestrians", [])):
        _require(
            item,
            f"pedestrians[{i}]",
            {"position", "radius", "speed", "waypoints", "group"},
            {"position", "radius"},
        )
        pedestrians.append(
            Pedestrian(
                position=_point(item["position"], f"pedestrians[{i}].position"),
                radius=float(item["radius"]),
                speed=float(item.get("speed", 0.0)),
                waypoints=tuple(
                    _point(w, f"pedestrians[{i}].waypoints[{j}]")
                    for j, w in enumerate(item.get("waypoints", []))
                ),
                group=item.get("group"),
            )
        )

    signs = []
    for i, item in enumerate(doc.get("signs", [])):
        _require(item, f"signs[{i}]", {"position", "direction"}, {"position", "direction"})
        signs.append(
            DetourSign(_point(item["position"], f"signs[{i}].position"), item["direction"])
        )

    try:
        world = SemanticWorld(
            terrain_regions=regions,
            static_obstacles=obstacles,
            pedestrians=pedestrians,
            goal=_point(doc["goal"], "goal"),
            signs=signs,
        )
    except ValueError as exc:
        raise ScenarioError(f"world: {exc}") from exc

    grid_doc = doc.get("grid", {})
    _require(grid_doc, "grid", {"n", "resolution"})
    grid_n = int(grid_doc.get("n", 200))
    grid_resolution = float(grid_doc.get("resolution", 0.1))

    lidar_doc = doc.get("lidar", {})
    _require(lidar_doc, "lidar", {"rays", "max_range"})

    cam_doc = doc.get("camera", {})
    _require(
        cam_doc,
        "camera",
        {
            "focal_px", "image_size", "principal_point", "mount_height",
            "mount_pitch_deg", "theta_fov_deg",
        },
    )
    image_size = tuple(int(v) for v in cam_doc.get("image_size", [320, 240]))
    principal = cam_doc.get("principal_point")
    if principal is None:
        principal = (image_size[0] / 2.0, image_size[1] / 2.0)
    cam = CameraModel(
        focal_px=float(cam_doc.get("focal_px", 120.0)),
        image_size=image_size,  # type: ignore[arg-type]
        principal_point=(float(principal[0]), float(principal[1])),
        mount_height=float(cam_doc.get("mount_height", 0.5)),
        mount_pitch=math.radians(float(cam_doc.get("mount_pitch_deg", 0.0))),
        theta_fov=math.radians(float(cam_doc.get("theta_fov_deg", 60.0))),
    )

    layout_doc = doc.get("layout", {})
    _require(layout_doc, "layout", {"rows", "cols", "d_row", "d_col", "first_row_distance"})
    layout = CandidateLayout(
        rows=int(layout_doc.get("rows", 2)),
        cols=int(layout_doc.get("cols", 6)),
        d_row=float(layout_doc.get("d_row", 2.5)),
        d_col=float(layout_doc.get("d_col", 2.0)),
        first_row_distance=(
            float(layout_doc["first_row_distance"])
            if layout_doc.get("first_row_distance") is not None
            else None
        ),
    )

    nav_doc = doc.get("navigator", {})
    _require(
        nav_doc,
        "navigator",
        {"d_thresh", "t_query", "n_pat", "extrapolation", "requery_cooldown", "query_timeout"},
    )
    tick_rate = float(doc.get("tick_rate", 10.0))
    nav = NavigatorConfig(
        layout=layout,
        d_thresh=float(nav_doc.get("d_thresh", 4.0)),
        t_query=float(nav_doc.get("t_query", 5.0)),
        v_max=v_max,
        n_pat=int(nav_doc.get("n_pat", 200)),
        tick_rate=tick_rate,
        extrapolation_enabled=bool(nav_doc.get("extrapolation", True)),
        requery_cooldown=float(nav_doc.get("requery_cooldown", 1.0)),
        query_timeout=float(nav_doc.get("query_timeout", 15.0)),
    )

    planner_doc = doc.get("planner", {})
    _require(
        planner_doc,
        "planner",
        {"alpha", "dt", "t_hor", "v_samples", "omega_samples", "d_clear"},
    )
    alpha = planner_doc.get("alpha", [10.0, 7.0, 1.0, 7.5])
    if len(alpha) != 4:
        raise ScenarioError("planner.alpha: expected four weights")
    planner = PlannerConfig(
        alpha_1=float(alpha[0]),
        alpha_2=float(alpha[1]),
        alpha_3=float(alpha[2]),
        alpha_4=float(alpha[3]),
        v_max=v_max,
        omega_max=robot.omega_max,
        accel_lin=robot.accel_lin,
        accel_ang=robot.accel_ang,
        dt=float(planner_doc.get("dt", 0.2)),
        t_hor=float(planner_doc.get("t_hor", 2.0)),
        v_samples=int(planner_doc.get("v_samples", 7)),
        omega_samples=int(planner_doc.get("omega_samples", 15)),
        theta_fov=cam.theta_fov,
        d_clear=float(planner_doc.get("d_clear", 2.0)),
    )

    policy_doc = doc.get("policy", {})
    _require(policy_doc, "policy", {"unacceptable"})
    try:
        policy = AcceptabilityPolicy(
            unacceptable_terrain=frozenset(
                TerrainClass(c) for c in policy_doc.get("unacceptable", [])
            )
        )
    except ValueError as exc:
        raise ScenarioError(f"policy.unacceptable: {exc}") from exc

    catalog = (
        load_catalog(doc["catalog_file"]) if doc.get("catalog_file") else default_catalog()
    )

    return Scenario(
        name=str(doc["name"]),
        seed=int(doc.get("seed", 0)),
        world=world,
        robot=robot,
        cam=cam,
        nav=nav,
        planner=planner,
        grid_n=grid_n,
        grid_resolution=grid_resolution,
        lidar_rays=int(lidar_doc.get("rays", 720)),
        lidar_max_range=float(lidar_doc.get("max_range", 10.0)),
        tick_rate=tick_rate,
        tick_limit=int(doc.get("tick_limit", 2000)),
        goal_tolerance=float(doc.get("goal_tolerance", 0.5)),
        policy=policy,
        catalog=catalog,
    )
