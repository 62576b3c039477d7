"""Granular-pile task: sweep a scattered pile of point grains into a T shape.

Kinematic swept-rectangle pushing: a flat board of half-width 0.05
translates from the sweep start to the sweep end; grains inside the
swept rectangle ride along to the board's leading edge, keeping their
lateral offset. A small positional noise models actuation slop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pam import config
from pam.actions import ActionPrimitive
from pam.rng import Rng

G = config.GRANULAR_GRAINS
HALFW = config.GRANULAR_BOARD_HALFWIDTH
NOISE = config.GRANULAR_STEP_NOISE
_EDGE = 0.004  # keep grains strictly inside the workspace


@dataclass(frozen=True)
class GranularState:
    grains: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grains, dtype=np.float64)
        if g.shape != (G, 2):
            raise ValueError(f"expected ({G}, 2) grains, got {g.shape}")
        if np.any(g < 0.0) or np.any(g > 1.0):
            raise ValueError("grains outside the workspace")
        object.__setattr__(self, "grains", g)


def reset(rng: Rng) -> GranularState:
    """Scatter grains into 1-3 random gaussian blobs."""
    n_blobs = 1 + rng.randint(0, 2)
    centers = 0.15 + 0.7 * rng.uniforms(n_blobs * 2).reshape(n_blobs, 2)
    sigmas = 0.04 + 0.08 * rng.uniforms(n_blobs)
    per = [G // n_blobs] * n_blobs
    for i in range(G - sum(per)):
        per[i] += 1
    chunks = []
    for c, s, n in zip(centers, sigmas, per):
        chunks.append(c + s * rng.normals((n, 2)))
    grains = np.clip(np.concatenate(chunks), _EDGE, 1.0 - _EDGE)
    return GranularState(grains)


def step(state: GranularState, action: ActionPrimitive, rng: Rng | None = None) -> GranularState:
    """Sweep from action.start to action.end; rng=None gives the noise-free step."""
    if action.kind != "sweep":
        raise ValueError(f"granular task needs a sweep action, got {action.kind!r}")
    p_s, p_e = action.start, action.end
    seg = p_e - p_s
    length = float(np.linalg.norm(seg))
    grains = state.grains.copy()
    if length > 1e-12:
        direction = seg / length
        normal = np.array([-direction[1], direction[0]])
        rel = grains - p_s
        along = rel @ direction
        across = rel @ normal
        hit = (along >= 0.0) & (along <= length) & (np.abs(across) <= HALFW)
        if np.any(hit):
            grains[hit] = p_e + across[hit, None] * normal[None, :]
    if rng is not None:
        grains = grains + NOISE * rng.normals((G, 2))
    return GranularState(np.clip(grains, _EDGE, 1.0 - _EDGE))
