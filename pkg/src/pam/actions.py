"""Observation and action-primitive types shared by the tasks and the policy.

The workspace is the unit square in table coordinates. Actions carry
four reals: two 2-D endpoints (sweep start/end, or pick/place). The
model operates on a [-1, 1] normalization of those four numbers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pam import config

KINDS = ("sweep", "pick_place")


def in_workspace(xy: np.ndarray, tol: float = 1e-9) -> bool:
    return bool(np.all(xy >= config.WORKSPACE_LO - tol) and np.all(xy <= config.WORKSPACE_HI + tol))


@dataclass(frozen=True)
class PointSet:
    """Fixed-size 2-D observation point cloud in workspace coordinates."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"points must be (M, 2), got {pts.shape}")
        if pts.shape[0] != config.OBS_POINTS:
            raise ValueError(f"expected {config.OBS_POINTS} points, got {pts.shape[0]}")
        if not in_workspace(pts):
            raise ValueError("observation points outside the workspace")
        object.__setattr__(self, "points", pts)

    def permuted(self, order) -> "PointSet":
        return PointSet(self.points[np.asarray(order)])


@dataclass(frozen=True)
class ActionPrimitive:
    """Four-parameter primitive: (start, end) for sweep, (pick, place) otherwise."""

    kind: str
    params: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown action kind {self.kind!r}")
        p = np.asarray(self.params, dtype=np.float64)
        if p.shape != (config.ACTION_DIM,):
            raise ValueError(f"params must be shape ({config.ACTION_DIM},), got {p.shape}")
        if not in_workspace(p):
            raise ValueError(f"action endpoints outside workspace: {p}")
        object.__setattr__(self, "params", p)

    @property
    def start(self) -> np.ndarray:
        return self.params[:2]

    @property
    def end(self) -> np.ndarray:
        return self.params[2:]

    def normalized(self) -> np.ndarray:
        """Map workspace [0,1] coordinates to the model's [-1,1] range."""
        return 2.0 * self.params - 1.0

    @classmethod
    def from_normalized(cls, kind: str, values: np.ndarray) -> "ActionPrimitive":
        """Inverse of normalized(); values outside the range clamp to the
        workspace boundary so the simulator never sees an invalid target."""
        v = np.asarray(values, dtype=np.float64)
        params = np.clip((v + 1.0) / 2.0, config.WORKSPACE_LO, config.WORKSPACE_HI)
        return cls(kind=kind, params=params)


def action_distance(a: ActionPrimitive, b: ActionPrimitive) -> float:
    """Euclidean distance in normalized action space."""
    return float(np.linalg.norm(a.normalized() - b.normalized()))
