"""Looped-rope task: pick-and-place a closed chain toward a circle.

A pick-and-place grabs the node nearest the pick point, moves it to the
place point with neighbors following under an exponentially decaying
displacement (decay length 3 segments along the ring), then a fixed
number of position-based length-constraint iterations restore segment
lengths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pam import config, kernels
from pam.actions import ActionPrimitive
from pam.envs.targets import CIRCLE_CENTER, CIRCLE_RADIUS
from pam.rng import Rng

R = config.ROPE_NODES
DECAY = config.ROPE_DECAY_SEGMENTS
RELAX_ITERS = config.ROPE_RELAX_ITERS


@dataclass(frozen=True)
class RopeState:
    nodes: np.ndarray   # (R, 2) positions; segment i joins node i and i+1 mod R
    rest: np.ndarray    # (R,) rest length per segment

    def __post_init__(self):
        n = np.asarray(self.nodes, dtype=np.float64)
        r = np.asarray(self.rest, dtype=np.float64)
        if n.shape != (R, 2) or r.shape != (R,):
            raise ValueError(f"bad rope arrays: nodes {n.shape}, rest {r.shape}")
        object.__setattr__(self, "nodes", n)
        object.__setattr__(self, "rest", r)

    def segment_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.roll(self.nodes, -1, axis=0) - self.nodes, axis=1)

    def total_rest_length(self) -> float:
        return float(self.rest.sum())


def _ring_distance(i: int) -> np.ndarray:
    j = np.arange(R)
    return np.minimum((j - i) % R, (i - j) % R).astype(np.float64)


def _circle_nodes() -> np.ndarray:
    theta = np.linspace(0.0, 2.0 * np.pi, R, endpoint=False)
    return CIRCLE_CENTER + CIRCLE_RADIUS * np.stack([np.cos(theta), np.sin(theta)], axis=1)


def _relax(nodes: np.ndarray, rest: np.ndarray, iters: int) -> None:
    kernels.rope_relax(nodes, rest, iters)


def _converge(nodes: np.ndarray, rest: np.ndarray, tol: float = 1e-10, max_rounds: int = 40) -> None:
    """Relax until segment lengths match rest lengths to within tol."""
    for _ in range(max_rounds):
        _relax(nodes, rest, 200)
        lengths = np.linalg.norm(np.roll(nodes, -1, axis=0) - nodes, axis=1)
        if np.max(np.abs(lengths - rest)) < tol:
            return


def reset(rng: Rng) -> RopeState:
    """Start from the target circle and scramble it with random drags."""
    nodes = _circle_nodes()
    seg = np.linalg.norm(np.roll(nodes, -1, axis=0) - nodes, axis=1)
    rest = seg.copy()
    n_drags = 4 + rng.randint(0, 3)
    for _ in range(n_drags):
        i = rng.randint(0, R - 1)
        target = 0.12 + 0.76 * rng.uniforms(2)
        delta = target - nodes[i]
        w = np.exp(-_ring_distance(i) / DECAY)
        nodes = nodes + w[:, None] * delta[None, :]
        _relax(nodes, rest, RELAX_ITERS)
    _converge(nodes, rest)
    nodes = np.clip(nodes, 0.002, 0.998)
    return RopeState(nodes=nodes, rest=rest)


def step(state: RopeState, action: ActionPrimitive, rng: Rng | None = None) -> RopeState:
    """Pick the node nearest action.start, place it at action.end."""
    if action.kind != "pick_place":
        raise ValueError(f"rope task needs a pick_place action, got {action.kind!r}")
    nodes = state.nodes.copy()
    i = int(np.argmin(np.linalg.norm(nodes - action.start[None, :], axis=1)))
    delta = action.end - nodes[i]
    w = np.exp(-_ring_distance(i) / DECAY)
    nodes = nodes + w[:, None] * delta[None, :]
    _relax(nodes, state.rest, RELAX_ITERS)
    return RopeState(nodes=np.clip(nodes, 0.002, 0.998), rest=state.rest.copy())


def densified(state: RopeState, per_segment: int = 4) -> np.ndarray:
    """Points along the loop at sub-segment resolution (for FPS and rasters)."""
    pts = []
    for i in range(R):
        a = state.nodes[i]
        b = state.nodes[(i + 1) % R]
        ts = np.arange(per_segment) / per_segment
        pts.append(a[None, :] + ts[:, None] * (b - a)[None, :])
    return np.concatenate(pts)
