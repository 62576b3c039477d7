"""Task-completion metrics: occupancy IoU, target coverage, assignment EMD.

All three compare the current object state against a TargetSpec. States
are rasterized onto the shared 64x64 occupancy grid (grains directly,
rope as a dilated polyline); the EMD matches 64 farthest-point-sampled
state points against the 64 target points exactly via the Hungarian
kernel and reports the mean matched distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from pam import config, kernels

GRID = config.GRID_SIZE
MAX_EMD = math.sqrt(2.0)  # workspace diagonal, sentinel for empty states


@dataclass(frozen=True)
class QualityMetrics:
    iou: float
    coverage: float
    emd: float

    def __post_init__(self):
        if not (0.0 <= self.iou <= 1.0 and 0.0 <= self.coverage <= 1.0 and self.emd >= 0.0):
            raise ValueError(f"metrics out of range: {self}")

    def to_dict(self) -> dict:
        return {"iou": self.iou, "coverage": self.coverage, "emd": self.emd}


def cell_of(points: np.ndarray) -> np.ndarray:
    """Grid cell indices (ix, iy) for workspace points."""
    idx = np.floor(np.asarray(points) * GRID).astype(np.int64)
    return np.clip(idx, 0, GRID - 1)


def raster_points(points: np.ndarray) -> np.ndarray:
    """Mark every cell containing at least one point."""
    grid = np.zeros((GRID, GRID), dtype=bool)
    if len(points):
        idx = cell_of(points)
        grid[idx[:, 0], idx[:, 1]] = True
    return grid


def dilate(grid: np.ndarray, radius: int = config.RASTER_DILATION) -> np.ndarray:
    """Chebyshev (square) dilation by `radius` cells."""
    out = grid.copy()
    for dx in range(-radius, radius + 1):
        for dy in range(-radius, radius + 1):
            if dx == 0 and dy == 0:
                continue
            shifted = np.zeros_like(grid)
            xs = slice(max(dx, 0), GRID + min(dx, 0))
            xt = slice(max(-dx, 0), GRID + min(-dx, 0))
            ys = slice(max(dy, 0), GRID + min(dy, 0))
            yt = slice(max(-dy, 0), GRID + min(-dy, 0))
            shifted[xt, yt] = grid[xs, ys]
            out |= shifted
    return out


def raster_closed_polyline(nodes: np.ndarray, radius: int = config.RASTER_DILATION) -> np.ndarray:
    """Rasterize a closed chain of nodes, then dilate."""
    step = 0.5 / GRID
    marks = []
    r = len(nodes)
    for i in range(r):
        a = nodes[i]
        b = nodes[(i + 1) % r]
        seg = np.linalg.norm(b - a)
        n = max(2, int(seg / step) + 1)
        ts = np.linspace(0.0, 1.0, n)
        marks.append(a[None, :] + ts[:, None] * (b - a)[None, :])
    grid = raster_points(np.concatenate(marks))
    return dilate(grid, radius)


def iou(a: np.ndarray, b: np.ndarray) -> float:
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union


def coverage(state: np.ndarray, target: np.ndarray) -> float:
    t = np.count_nonzero(target)
    if t == 0:
        return 0.0
    return np.count_nonzero(state & target) / t


def farthest_point_sample(points: np.ndarray, k: int) -> np.ndarray:
    """Indices of k points chosen by farthest-point iteration.

    Deterministic: starts from the point nearest the centroid (ties to
    the lowest index), then repeatedly takes the point farthest from the
    selected set.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if k > n:
        raise ValueError(f"cannot sample {k} from {n} points")
    centroid = pts.mean(axis=0)
    first = int(np.argmin(np.linalg.norm(pts - centroid, axis=1)))
    chosen = [first]
    dist = np.linalg.norm(pts - pts[first], axis=1)
    for _ in range(k - 1):
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(pts - pts[nxt], axis=1))
    return np.array(chosen, dtype=np.int64)


def emd(a: np.ndarray, b: np.ndarray):
    """Exact optimal-assignment EMD between equal-size point sets.

    Returns (mean matched distance, assignment array a_index -> b_index).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"point sets must share shape, got {a.shape} vs {b.shape}")
    cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    assign = kernels.hungarian(cost)
    return float(cost[np.arange(len(a)), assign].mean()), assign


def measure(state_raster: np.ndarray, state_points: np.ndarray, target) -> QualityMetrics:
    """Bundle the three metrics for a rasterized state against a target."""
    if not state_raster.any() or len(state_points) == 0:
        return QualityMetrics(iou=0.0, coverage=0.0, emd=MAX_EMD)
    value, _ = emd(state_points, target.points)
    return QualityMetrics(
        iou=iou(state_raster, target.grid),
        coverage=coverage(state_raster, target.grid),
        emd=value,
    )
