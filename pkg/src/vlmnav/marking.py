"""Numbered free-space markers: lattice candidates filtered by the grid,
projected into the camera image, ordered, and drawn as digits.

A candidate survives only if the straight grid segment from the robot to it
crosses no occupied cell and it projects inside the camera view. Survivors
are numbered nearest row first, left to right in pixel space, so the label
order encodes distance and lateral position for the VLM.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import CameraModel, project_ground_to_pixel
from .mapping import Cell, OccupancyGrid, supercover_line


@dataclass(frozen=True)
class CandidateLayout:
    """l x m lattice of candidate ground points ahead of the robot."""

    rows: int
    cols: int
    d_row: float = 2.5
    d_col: float = 2.0
    first_row_distance: float | None = None

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("layout needs at least one row and one column")
        if self.d_row <= 0 or self.d_col <= 0:
            raise ValueError("lattice spacing must be positive")
        if self.first_row_distance is None:
            # keep the lattice uniform when the nearest-row offset is unspecified
            object.__setattr__(self, "first_row_distance", self.d_row)
        if self.first_row_distance <= 0:
            raise ValueError("candidate rows must lie strictly forward of the robot")


def generate_candidates(layout: CandidateLayout) -> list[list[tuple[float, float]]]:
    """Candidate points per row (robot frame), each row ordered left to right.

    Row i sits at forward distance first_row_distance + i*d_row; columns are
    centered laterally and spaced d_col apart (leftmost first, y positive).
    """
    rows = []
    for i in range(layout.rows):
        x = layout.first_row_distance + i * layout.d_row
        row = []
        for j in range(layout.cols):
            y = (layout.cols - 1) * layout.d_col / 2.0 - j * layout.d_col
            row.append((x, y))
        rows.append(row)
    return rows


def line_of_sight_free(grid: OccupancyGrid, cell: Cell) -> bool:
    """True iff the segment from the robot cell to ``cell`` crosses no
    occupied cell (endpoint included, robot cell excluded)."""
    if not grid.in_bounds(cell):
        raise IndexError(f"cell {cell} outside {grid.n}x{grid.n} grid")
    for c in supercover_line(grid.robot_cell, cell)[1:]:
        if grid.mask[c[0], c[1]]:
            return False
    return True


@dataclass(frozen=True)
class MarkerEntry:
    label: int
    grid_cell: Cell
    ground_point: tuple[float, float]  # robot frame
    pixel: tuple[float, float]
    row_index: int


@dataclass(frozen=True)
class MarkerSet:
    """Ordered, numbered free-space markers for one camera image."""

    entries: tuple[MarkerEntry, ...]
    tick: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def labels(self) -> set[int]:
        return {e.label for e in self.entries}

    def by_label(self, label: int) -> MarkerEntry:
        for e in self.entries:
            if e.label == label:
                return e
        raise KeyError(f"no marker labeled {label}")


def build_marker_set(
    grid: OccupancyGrid,
    layout: CandidateLayout,
    cam: CameraModel,
    tick: int = 0,
    filter_obstructed: bool = True,
) -> MarkerSet:
    """Filter lattice candidates by line of sight and camera visibility,
    then number the survivors (near row first, left to right in the image).

    Candidates outside the grid or the camera view are silently dropped;
    labels stay consecutive. An empty result is valid.
    ``filter_obstructed=False`` keeps occupied/occluded candidates (the
    marking-ablation mode: numbers land on obstacles too).
    """
    entries = []
    label = 1
    for row_index, row in enumerate(generate_candidates(layout)):
        visible = []
        for point in row:
            cell = grid.cell_of(point)
            if not grid.in_bounds(cell):
                continue
            if filter_obstructed and not line_of_sight_free(grid, cell):
                continue
            pixel = project_ground_to_pixel(cam, point)
            if pixel is None:
                continue
            visible.append((point, cell, pixel))
        visible.sort(key=lambda item: item[2][0])  # left to right: ascending u
        for point, cell, pixel in visible:
            entries.append(
                MarkerEntry(
                    label=label,
                    grid_cell=cell,
                    ground_point=point,
                    pixel=pixel,
                    row_index=row_index,
                )
            )
            label += 1
    return MarkerSet(entries=tuple(entries), tick=tick)


# 3x5 digit glyphs; rows top to bottom, '#' = lit
_DIGIT_GLYPHS = {
    "0": ("###", "#.#", "#.#", "#.#", "###"),
    "1": (".#.", "##.", ".#.", ".#.", "###"),
    "2": ("###", "..#", "###", "#..", "###"),
    "3": ("###", "..#", "###", "..#", "###"),
    "4": ("#.#", "#.#", "###", "..#", "..#"),
    "5": ("###", "#..", "###", "..#", "###"),
    "6": ("###", "#..", "###", "#.#", "###"),
    "7": ("###", "..#", ".#.", ".#.", ".#."),
    "8": ("###", "#.#", "###", "#.#", "###"),
    "9": ("###", "#.#", "###", "..#", "###"),
}

MARKER_SCALE = 3
MARKER_FG = (255, 220, 0)
MARKER_BG = (20, 20, 20)


def _stamp_digits(img: np.ndarray, text: str, center: tuple[int, int]) -> None:
    s = MARKER_SCALE
    glyph_w, glyph_h, gap = 3 * s, 5 * s, s
    total_w = len(text) * glyph_w + (len(text) - 1) * gap
    pad = s
    h, w = img.shape[:2]
    left = center[0] - total_w // 2
    top = center[1] - glyph_h // 2
    y0, y1 = max(0, top - pad), min(h, top + glyph_h + pad)
    x0, x1 = max(0, left - pad), min(w, left + total_w + pad)
    if y0 >= y1 or x0 >= x1:
        return
    img[y0:y1, x0:x1] = MARKER_BG
    for k, ch in enumerate(text):
        gx = left + k * (glyph_w + gap)
        for r, line in enumerate(_DIGIT_GLYPHS[ch]):
            for c, bit in enumerate(line):
                if bit != "#":
                    continue
                py0, py1 = top + r * s, top + (r + 1) * s
                px0, px1 = gx + c * s, gx + (c + 1) * s
                py0, py1 = max(0, py0), min(h, py1)
                px0, px1 = max(0, px0), min(w, px1)
                if py0 < py1 and px0 < px1:
                    img[py0:py1, px0:px1] = MARKER_FG


def annotate_image(img: np.ndarray, ms: MarkerSet) -> np.ndarray:
    """Copy of ``img`` with each marker label stamped at its pixel.

    Rendering is pure numpy (fixed bitmap glyphs), so output is
    bit-identical across runs and platforms.
    """
    out = img.copy()
    for entry in ms.entries:
        center = (int(round(entry.pixel[0])), int(round(entry.pixel[1])))
        _stamp_digits(out, str(entry.label), center)
    return out
