"""Simulated desk-scale tasks and their completion metrics.

Two tasks stand in for the robot: granular-pile shaping (sweep
primitive) and looped-rope shaping (pick-and-place primitive). A Task
bundles reset/step dynamics, the fixed-size point observation, the goal
spec, and the metric computation.
"""

from __future__ import annotations

import numpy as np

from pam import config
from pam.actions import ActionPrimitive, PointSet
from pam.envs import granular, metrics, rope, targets
from pam.envs.metrics import QualityMetrics
from pam.rng import Rng


class GranularTask:
    name = "granular"
    action_kind = "sweep"

    def __init__(self):
        self.target = targets.granular_target()
        self.max_steps = config.MAX_STEPS[self.name]
        self.done_emd = config.DONE_EMD[self.name]

    def reset(self, rng: Rng):
        return granular.reset(rng)

    def step(self, state, action: ActionPrimitive, rng: Rng | None = None):
        return granular.step(state, action, rng)

    def observe(self, state) -> PointSet:
        sel = metrics.farthest_point_sample(state.grains, config.OBS_POINTS)
        return PointSet(state.grains[sel])

    def raster(self, state) -> np.ndarray:
        return metrics.raster_points(state.grains)

    def measure(self, state) -> QualityMetrics:
        return metrics.measure(self.raster(state), self.observe(state).points, self.target)

    def state_to_dict(self, state) -> dict:
        return {"grains": state.grains.tolist()}

    def state_from_dict(self, payload: dict):
        return granular.GranularState(np.array(payload["grains"], dtype=np.float64))


class RopeTask:
    name = "rope"
    action_kind = "pick_place"

    def __init__(self):
        self.target = targets.rope_target()
        self.max_steps = config.MAX_STEPS[self.name]
        self.done_emd = config.DONE_EMD[self.name]

    def reset(self, rng: Rng):
        return rope.reset(rng)

    def step(self, state, action: ActionPrimitive, rng: Rng | None = None):
        return rope.step(state, action, rng)

    def observe(self, state) -> PointSet:
        dense = rope.densified(state)
        sel = metrics.farthest_point_sample(dense, config.OBS_POINTS)
        return PointSet(np.clip(dense[sel], 0.0, 1.0))

    def raster(self, state) -> np.ndarray:
        return metrics.raster_closed_polyline(state.nodes)

    def measure(self, state) -> QualityMetrics:
        return metrics.measure(self.raster(state), self.observe(state).points, self.target)

    def state_to_dict(self, state) -> dict:
        return {"nodes": state.nodes.tolist(), "rest": state.rest.tolist()}

    def state_from_dict(self, payload: dict):
        return rope.RopeState(
            nodes=np.array(payload["nodes"], dtype=np.float64),
            rest=np.array(payload["rest"], dtype=np.float64),
        )


_REGISTRY = {}


def get_task(name: str):
    if name not in _REGISTRY:
        if name == "granular":
            _REGISTRY[name] = GranularTask()
        elif name == "rope":
            _REGISTRY[name] = RopeTask()
        else:
            raise ValueError(f"unknown task {name!r}; expected granular or rope")
    return _REGISTRY[name]
