"""VLM-guided 2D navigation stack and deterministic simulator."""

from .context import ContextCatalog, default_catalog
from .geometry import CameraModel, FrameTransform, Pose2D, apply_transform
from .mapping import OccupancyGrid, simulate_lidar_to_grid
from .marking import CandidateLayout, MarkerSet, build_marker_set
from .metrics import discrete_frechet
from .navigator import Navigator, NavigatorConfig, QueryDecision
from .planner import PlannerConfig, plan
from .scenario import Scenario, load_scenario
from .simulate import Simulation, run_scenario
from .world import RobotState, SemanticWorld, TerrainClass, step_kinematics

__all__ = [
    "CameraModel",
    "CandidateLayout",
    "ContextCatalog",
    "FrameTransform",
    "MarkerSet",
    "Navigator",
    "NavigatorConfig",
    "OccupancyGrid",
    "PlannerConfig",
    "Pose2D",
    "QueryDecision",
    "RobotState",
    "Scenario",
    "SemanticWorld",
    "Simulation",
    "TerrainClass",
    "apply_transform",
    "build_marker_set",
    "default_catalog",
    "discrete_frechet",
    "load_scenario",
    "plan",
    "run_scenario",
    "simulate_lidar_to_grid",
    "step_kinematics",
]
