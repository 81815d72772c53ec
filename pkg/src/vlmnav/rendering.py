"""Flat-color semantic camera renderer.

Each pixel ray is intersected with the ground plane and painted with the
terrain class color at the hit point; obstacles and pedestrians occlude the
ground as vertically extruded silhouettes. The output is deliberately
schematic: deterministic, legible to vision-chat models, and trivially
invertible for tests via the ground-plane projection.
"""

from __future__ import annotations

import math

import numpy as np
import shapely

from .geometry import CameraModel, Pose2D
from .world import SemanticWorld, TerrainClass

TERRAIN_COLORS: dict[TerrainClass, tuple[int, int, int]] = {
    TerrainClass.PAVEMENT: (190, 190, 190),
    TerrainClass.GRASS: (70, 160, 60),
    TerrainClass.GRAVEL: (150, 130, 110),
    TerrainClass.ASPHALT_ROAD: (60, 60, 70),
    TerrainClass.CROSSWALK: (235, 235, 235),
    TerrainClass.INDOOR_FLOOR: (205, 185, 150),
    TerrainClass.UNKNOWN: (120, 110, 100),
}

OBSTACLE_COLOR = (90, 60, 40)
PEDESTRIAN_COLOR = (200, 60, 60)
SKY_COLOR = (140, 185, 235)

_COLOR_TO_TERRAIN = {color: cls for cls, color in TERRAIN_COLORS.items()}


def color_to_terrain(color: tuple[int, int, int]) -> TerrainClass | None:
    """Terrain class for an exact renderer color, None for non-terrain pixels."""
    return _COLOR_TO_TERRAIN.get(tuple(int(c) for c in color))


def _pixel_rays(cam: CameraModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-pixel ray directions (robot 3D frame), shape (H, W)."""
    w, h = cam.image_size
    us, vs = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    a = (us - cam.principal_point[0]) / cam.focal_px
    b = (vs - cam.principal_point[1]) / cam.focal_px
    right, down, optical = cam._axes()
    dx = a * right[0] + b * down[0] + optical[0]
    dy = a * right[1] + b * down[1] + optical[1]
    dz = a * right[2] + b * down[2] + optical[2]
    return dx, dy, dz


def _entity_hits(
    dx: np.ndarray,
    dy: np.ndarray,
    dz: np.ndarray,
    mount_height: float,
    world: SemanticWorld,
    pose: Pose2D,
    t: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Nearest ray parameter hitting an extruded obstacle or pedestrian.

    Returns (t_hit, is_pedestrian); t_hit is inf where nothing is hit.
    """
    t_best = np.full(dx.shape, np.inf)
    is_ped = np.zeros(dx.shape, dtype=bool)
    c, s = math.cos(-pose.theta), math.sin(-pose.theta)

    def to_robot(p):
        rx, ry = p[0] - pose.x, p[1] - pose.y
        return (c * rx - s * ry, s * rx + c * ry)

    def consider(t_hit, height, ped):
        nonlocal t_best, is_ped
        with np.errstate(invalid="ignore"):
            z = mount_height + t_hit * dz
            ok = (t_hit > 1e-9) & (z >= 0.0) & (z <= height) & (t_hit < t_best)
        t_best = np.where(ok, t_hit, t_best)
        is_ped = np.where(ok, ped, is_ped)

    for obstacle in world.static_obstacles:
        pts = [to_robot(p) for p in obstacle]
        for a_pt, b_pt in zip(pts, pts[1:] + pts[:1]):
            ex, ey = b_pt[0] - a_pt[0], b_pt[1] - a_pt[1]
            denom = dx * ey - dy * ex
            with np.errstate(divide="ignore", invalid="ignore"):
                t_hit = (a_pt[0] * ey - a_pt[1] * ex) / denom
                s_par = (a_pt[0] * dy - a_pt[1] * dx) / denom
            t_hit = np.where(
                (np.abs(denom) > 1e-12) & (s_par >= 0) & (s_par <= 1), t_hit, np.inf
            )
            consider(t_hit, world.obstacle_height, False)
    for pos, radius, _ in world.pedestrian_states(t):
        cx, cy = to_robot(pos)
        qa = dx * dx + dy * dy
        qb = -2.0 * (dx * cx + dy * cy)
        qc = cx * cx + cy * cy - radius * radius
        disc = qb * qb - 4 * qa * qc
        with np.errstate(invalid="ignore", divide="ignore"):
            root = np.sqrt(disc)
            t1 = (-qb - root) / (2 * qa)
            t2 = (-qb + root) / (2 * qa)
        t_hit = np.where(t1 > 1e-9, t1, t2)
        t_hit = np.where((disc >= 0) & (qa > 1e-12), t_hit, np.inf)
        consider(t_hit, world.pedestrian_height, True)
    return t_best, is_ped


def render_camera(
    world: SemanticWorld, pose: Pose2D, cam: CameraModel, t: float = 0.0
) -> np.ndarray:
    """Render the semantic camera view at ``pose`` (uint8 RGB, H x W x 3)."""
    w, h = cam.image_size
    dx, dy, dz = _pixel_rays(cam)
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[:] = SKY_COLOR

    # ground intersections
    below = dz < -1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ground = np.where(below, cam.mount_height / -dz, np.inf)
        gx_r = t_ground * dx
        gy_r = t_ground * dy
        # robot -> odom
        cth, sth = math.cos(pose.theta), math.sin(pose.theta)
        gx = pose.x + cth * gx_r - sth * gy_r
        gy = pose.y + sth * gx_r + cth * gy_r

    ground_color = np.empty((h, w, 3), dtype=np.uint8)
    ground_color[:] = TERRAIN_COLORS[TerrainClass.UNKNOWN]
    for region in world.terrain_regions:
        inside = shapely.intersects_xy(
            region.shapely(), np.where(below, gx, np.nan), np.where(below, gy, np.nan)
        )
        ground_color[inside] = TERRAIN_COLORS[region.terrain]
    img[below] = ground_color[below]

    # extruded entity silhouettes occlude ground and sky
    t_entity, is_ped = _entity_hits(dx, dy, dz, cam.mount_height, world, pose, t)
    entity_visible = np.isfinite(t_entity) & (t_entity < t_ground)
    img[entity_visible & ~is_ped] = OBSTACLE_COLOR
    img[entity_visible & is_ped] = PEDESTRIAN_COLOR
    return img


def crop_patch(img: np.ndarray, center_px: tuple[float, float], n_pat: int) -> np.ndarray:
    """n_pat x n_pat crop centered at a pixel, zero-padded at image edges."""
    patch = np.zeros((n_pat, n_pat, 3), dtype=np.uint8)
    cu, cv = int(round(center_px[0])), int(round(center_px[1]))
    half = n_pat // 2
    v0, v1 = cv - half, cv - half + n_pat
    u0, u1 = cu - half, cu - half + n_pat
    sv0, sv1 = max(0, v0), min(img.shape[0], v1)
    su0, su1 = max(0, u0), min(img.shape[1], u1)
    if sv0 < sv1 and su0 < su1:
        patch[sv0 - v0 : sv1 - v0, su0 - u0 : su1 - u0] = img[sv0:sv1, su0:su1]
    return patch
