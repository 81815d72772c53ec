"""Robot-centric occupancy grid built from simulated lidar raycasts.

The grid frame is the robot frame discretized: the robot sits at cell
(n/2, n/2), rows grow forward, columns grow leftward. Raw lidar hits are
rasterized and then dilated by the robot radius so the planner can treat
the robot as a point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .geometry import Pose2D
from .world import SemanticWorld

Cell = tuple[int, int]


def cell_of_point(p_robot: tuple[float, float], n: int, resolution: float) -> Cell:
    """Grid cell containing a robot-frame point (rounding half-up)."""
    row = n // 2 + math.floor(p_robot[0] / resolution + 0.5)
    col = n // 2 + math.floor(p_robot[1] / resolution + 0.5)
    return (row, col)


def point_of_cell(cell: Cell, n: int, resolution: float) -> tuple[float, float]:
    """Robot-frame coordinates of a cell center."""
    return ((cell[0] - n // 2) * resolution, (cell[1] - n // 2) * resolution)


def supercover_line(a: Cell, b: Cell) -> list[Cell]:
    """Every cell the continuous segment between the two cell centers touches.

    Stricter than 8-connected Bresenham: when the segment passes exactly
    through a cell corner, both side cells are included. Starts at ``a``
    and ends at ``b``.
    """
    (x0, y0), (x1, y1) = a, b
    dx, dy = x1 - x0, y1 - y0
    nx, ny = abs(dx), abs(dy)
    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    px, py = x0, y0
    cells = [(px, py)]
    ix = iy = 0
    while ix < nx or iy < ny:
        decision = (1 + 2 * ix) * ny - (1 + 2 * iy) * nx
        if decision == 0:
            # exact corner crossing: the segment touches both side cells
            cells.append((px + sx, py))
            cells.append((px, py + sy))
            px += sx
            py += sy
            ix += 1
            iy += 1
        elif decision < 0:
            px += sx
            ix += 1
        else:
            py += sy
            iy += 1
        cells.append((px, py))
    return cells


@dataclass
class OccupancyGrid:
    """n x n binary grid of inflated obstacle cells, robot at the center."""

    n: int
    resolution: float
    mask: np.ndarray  # bool (n, n), True = occupied (inflated)
    raw_hits: np.ndarray  # bool (n, n), True = raw lidar hit before inflation
    _dist_map: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.n % 2 != 0:
            raise ValueError("grid size n must be even")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")

    @property
    def robot_cell(self) -> Cell:
        return (self.n // 2, self.n // 2)

    @property
    def occupied(self) -> set[Cell]:
        rows, cols = np.nonzero(self.mask)
        return {(int(r), int(c)) for r, c in zip(rows, cols)}

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.n and 0 <= cell[1] < self.n

    def is_occupied(self, cell: Cell) -> bool:
        return bool(self.mask[cell[0], cell[1]])

    def cell_of(self, p_robot: tuple[float, float]) -> Cell:
        return cell_of_point(p_robot, self.n, self.resolution)

    def point_of(self, cell: Cell) -> tuple[float, float]:
        return point_of_cell(cell, self.n, self.resolution)

    def distance_map(self) -> np.ndarray:
        """Meters from each cell center to the nearest occupied cell."""
        if self._dist_map is None:
            if not self.mask.any():
                self._dist_map = np.full((self.n, self.n), np.inf)
            else:
                self._dist_map = (
                    ndimage.distance_transform_edt(~self.mask) * self.resolution
                )
        return self._dist_map

    @staticmethod
    def from_cells(
        n: int, resolution: float, occupied: set[Cell] | list[Cell]
    ) -> "OccupancyGrid":
        """Build a grid directly from occupied cells (tests, synthetic maps)."""
        mask = np.zeros((n, n), dtype=bool)
        for r, c in occupied:
            mask[r, c] = True
        mask[n // 2, n // 2] = False
        return OccupancyGrid(n=n, resolution=resolution, mask=mask, raw_hits=mask.copy())


def inflate(mask: np.ndarray, cells: int) -> np.ndarray:
    """Dilate occupied cells by a Euclidean disk of the given cell radius."""
    if cells <= 0 or not mask.any():
        return mask.copy()
    span = np.arange(-cells, cells + 1)
    dr, dc = np.meshgrid(span, span, indexing="ij")
    structure = dr * dr + dc * dc <= cells * cells
    return ndimage.binary_dilation(mask, structure=structure)


def _ray_segment_ranges(
    origin: np.ndarray, dirs: np.ndarray, a: np.ndarray, b: np.ndarray
) -> np.ndarray:
    """First-hit range of each ray against one segment (inf when missed)."""
    e = b - a
    rel = a - origin
    denom = dirs[:, 0] * e[1] - dirs[:, 1] * e[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (rel[0] * e[1] - rel[1] * e[0]) / denom
        s = (rel[0] * dirs[:, 1] - rel[1] * dirs[:, 0]) / denom
    valid = (np.abs(denom) > 1e-12) & (t >= 0.0) & (s >= 0.0) & (s <= 1.0)
    return np.where(valid, t, np.inf)


def _ray_circle_ranges(
    origin: np.ndarray, dirs: np.ndarray, center: np.ndarray, radius: float
) -> np.ndarray:
    """First positive-range intersection of unit-direction rays with a circle."""
    m = center - origin
    proj = dirs @ m
    disc = proj * proj - (m @ m - radius * radius)
    with np.errstate(invalid="ignore"):
        sqrt_disc = np.sqrt(disc)
    t1 = proj - sqrt_disc
    t2 = proj + sqrt_disc
    t = np.where(t1 >= 0.0, t1, t2)
    valid = (disc >= 0.0) & (t >= 0.0)
    return np.where(valid, t, np.inf)


def simulate_lidar_to_grid(
    world: SemanticWorld,
    pose: Pose2D,
    n: int,
    resolution: float,
    robot_radius: float,
    rays: int = 720,
    max_range: float = 10.0,
    t: float = 0.0,
) -> OccupancyGrid:
    """Cast uniformly spaced rays and rasterize first hits into the grid.

    Hits closer than ``max_range`` mark raw cells; the occupied set is the
    raw hits dilated by ceil(robot_radius / resolution) cells. Cells beyond
    a ray's first hit stay free (the marker line-of-sight check carries the
    occlusion burden downstream).
    """
    if rays < 360:
        raise ValueError("need at least 360 rays")
    origin = np.array([pose.x, pose.y])
    angles = pose.theta + 2.0 * math.pi * np.arange(rays) / rays
    dirs = np.column_stack([np.cos(angles), np.sin(angles)])

    ranges = np.full(rays, np.inf)
    for obstacle in world.static_obstacles:
        pts = [np.asarray(p, dtype=float) for p in obstacle]
        for a, b in zip(pts, pts[1:] + pts[:1]):
            ranges = np.minimum(ranges, _ray_segment_ranges(origin, dirs, a, b))
    for pos, radius, _ in world.pedestrian_states(t):
        ranges = np.minimum(
            ranges, _ray_circle_ranges(origin, dirs, np.asarray(pos, dtype=float), radius)
        )

    raw = np.zeros((n, n), dtype=bool)
    hit = ranges < max_range
    if hit.any():
        hit_pts = origin + dirs[hit] * ranges[hit, None]
        # odom -> robot frame
        c, s = math.cos(-pose.theta), math.sin(-pose.theta)
        rel = hit_pts - origin
        xr = c * rel[:, 0] - s * rel[:, 1]
        yr = s * rel[:, 0] + c * rel[:, 1]
        rows = n // 2 + np.floor(xr / resolution + 0.5).astype(int)
        cols = n // 2 + np.floor(yr / resolution + 0.5).astype(int)
        inb = (rows >= 0) & (rows < n) & (cols >= 0) & (cols < n)
        raw[rows[inb], cols[inb]] = True

    mask = inflate(raw, math.ceil(robot_radius / resolution))
    # the robot-cell invariant wins over pure dilation: planning from an
    # occupied center cell would wedge the robot permanently
    mask[n // 2, n // 2] = False
    return OccupancyGrid(n=n, resolution=resolution, mask=mask, raw_hits=raw)
