"""Goal-state specifications: occupancy grid plus EMD point set per task."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pam import config
from pam.envs import metrics

GRID = config.GRID_SIZE

# T glyph in workspace coordinates: crossbar and stem rectangles.
T_BAR = ((0.25, 0.65), (0.75, 0.80))    # (x0, y0), (x1, y1)
T_STEM = ((0.425, 0.20), (0.575, 0.65))

CIRCLE_CENTER = np.array([0.5, 0.5])
CIRCLE_RADIUS = 0.25


@dataclass(frozen=True)
class TargetSpec:
    task: str
    grid: np.ndarray            # bool (GRID, GRID) occupancy
    points: np.ndarray          # (EMD_POINTS, 2) sampled from occupied cells

    def __post_init__(self):
        if not self.grid.any():
            raise ValueError("target region is empty")
        cells = metrics.cell_of(self.points)
        if not np.all(self.grid[cells[:, 0], cells[:, 1]]):
            raise ValueError("target points stray outside the target region")


def _points_from_grid(grid: np.ndarray) -> np.ndarray:
    """EMD point set: farthest-point sample of occupied cell centers."""
    ix, iy = np.nonzero(grid)
    centers = np.stack([(ix + 0.5) / GRID, (iy + 0.5) / GRID], axis=1)
    sel = metrics.farthest_point_sample(centers, config.EMD_POINTS)
    return centers[sel]


def _rect_mask(rect) -> np.ndarray:
    (x0, y0), (x1, y1) = rect
    xs = (np.arange(GRID) + 0.5) / GRID
    ys = (np.arange(GRID) + 0.5) / GRID
    return ((xs >= x0) & (xs <= x1))[:, None] & ((ys >= y0) & (ys <= y1))[None, :]


def granular_target() -> TargetSpec:
    grid = _rect_mask(T_BAR) | _rect_mask(T_STEM)
    return TargetSpec(task="granular", grid=grid, points=_points_from_grid(grid))


def rope_target() -> TargetSpec:
    theta = np.linspace(0.0, 2.0 * np.pi, 128, endpoint=False)
    ring = CIRCLE_CENTER + CIRCLE_RADIUS * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    grid = metrics.raster_closed_polyline(ring)
    return TargetSpec(task="rope", grid=grid, points=_points_from_grid(grid))
