"""Scripted expert and synthetic preference oracle.

Stands in for the human annotator so the whole pipeline runs
unattended. Preference is defined by one-step greedy metric
improvement: candidate actions are scored by the EMD reached after a
deterministic (noise-free) simulator step, which makes every ranking
independently recomputable in tests. The human path goes through the
annotation service instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pam.actions import ActionPrimitive, action_distance
from pam.envs import metrics, rope
from pam.rng import Rng

# Candidates whose step worsens EMD by more than this go to the unrankable group.
UNRANKABLE_EMD_WORSENING = 0.005
AUX_JITTER = 0.03
AUX_MIN_DISTANCE = 0.01
_CORNERS = np.array([[0.03, 0.03], [0.97, 0.03], [0.03, 0.97], [0.97, 0.97]])


@dataclass(frozen=True)
class OracleRanking:
    """Annotation result: rankable ordering (best first), unrankable set,
    and the annotated optimal action."""

    ordering: tuple
    unrankable: tuple
    optimal_action: ActionPrimitive

    def __post_init__(self):
        seen = set(self.ordering) | set(self.unrankable)
        if len(seen) != len(self.ordering) + len(self.unrankable):
            raise ValueError("ordering and unrankable sets overlap")


def _post_step_emd(task, state, action: ActionPrimitive, target) -> float:
    nxt = task.step(state, action, None)
    pts = task.observe(nxt).points
    value, _ = metrics.emd(pts, target.points)
    return value


def _current_emd(task, state, target) -> float:
    value, _ = metrics.emd(task.observe(state).points, target.points)
    return value


def _granular_candidates(task, state, target, top: int):
    """Sweeps along the worst matched state->target pairs."""
    pts = task.observe(state).points
    _, assign = metrics.emd(pts, target.points)
    dists = np.linalg.norm(pts - target.points[assign], axis=1)
    order = np.argsort(-dists, kind="stable")
    cands = []
    for idx in order[:top]:
        src = pts[idx]
        dst = target.points[assign[idx]]
        gap = dst - src
        norm = np.linalg.norm(gap)
        if norm < 1e-9:
            continue
        direction = gap / norm
        for backoff in (0.02, 0.05):
            p_s = np.clip(src - backoff * direction, 0.0, 1.0)
            p_e = np.clip(dst, 0.0, 1.0)
            cands.append(ActionPrimitive("sweep", np.concatenate([p_s, p_e])))
    return cands


def _rope_matched_circle(state) -> np.ndarray:
    """Per-node target on the goal circle via best ring alignment
    (all rotations, both orientations)."""
    circle = rope._circle_nodes()
    nodes = state.nodes
    r = len(nodes)
    best, best_cost = None, np.inf
    for flip in (1, -1):
        idx = (np.arange(r) * flip) % r
        for off in range(r):
            matched = circle[(idx + off) % r]
            cost = float(np.linalg.norm(nodes - matched, axis=1).sum())
            if cost < best_cost:
                best_cost, best = cost, matched
    return best


def _rope_candidates(task, state, target, top: int):
    """Pick the most-displaced nodes; place toward the matched circle point.

    Fractional placements are included because the step's neighbor drag
    can overshoot when the node is moved the full distance.
    """
    matched = _rope_matched_circle(state)
    dists = np.linalg.norm(state.nodes - matched, axis=1)
    order = np.argsort(-dists, kind="stable")
    cands = []
    for idx in order[:top]:
        p = state.nodes[idx]
        gap = matched[idx] - p
        for fraction in (1.0, 0.7, 0.4):
            q = np.clip(p + fraction * gap, 0.0, 1.0)
            cands.append(ActionPrimitive("pick_place", np.concatenate([p, q])))
    return cands


def _noop_action(task, state) -> ActionPrimitive:
    """An action whose deterministic step leaves the state essentially unchanged."""
    if task.action_kind == "sweep":
        # tiny sweep in the corner with the most clearance from any grain
        grains = state.grains
        clear = [np.min(np.linalg.norm(grains - c[None, :], axis=1)) for c in _CORNERS]
        c = _CORNERS[int(np.argmax(clear))]
        return ActionPrimitive("sweep", np.concatenate([c, c + np.array([0.01, 0.0])]))
    matched = _rope_matched_circle(state)
    idx = int(np.argmax(np.linalg.norm(state.nodes - matched, axis=1)))
    p = state.nodes[idx]
    return ActionPrimitive("pick_place", np.concatenate([p, p]))


def _scored_candidates(task, state, target, top: int):
    """Candidate actions with their post-step EMDs, best first."""
    if task.action_kind == "sweep":
        cands = _granular_candidates(task, state, target, top)
    else:
        cands = _rope_candidates(task, state, target, top)
    scored = [(_post_step_emd(task, state, c, target), i, c) for i, c in enumerate(cands)]
    scored.sort(key=lambda item: (item[0], item[1]))
    return [(s, c) for s, _, c in scored]


def expert_action(task, state, target=None, rng: Rng | None = None) -> ActionPrimitive:
    """Best greedy one-step action; near no-op when nothing improves."""
    target = target or task.target
    current = _current_emd(task, state, target)
    scored = _scored_candidates(task, state, target, top=4)
    if scored and scored[0][0] < current - 1e-9:
        return scored[0][1]
    return _noop_action(task, state)


def aux_actions(task, state, target=None, k: int = 1, rng: Rng | None = None) -> list:
    """k distinct near-optimal alternatives: alternate cluster/node choices
    plus jittered endpoints, each still improving on the deterministic step."""
    if k < 1:
        raise ValueError("k must be >= 1")
    target = target or task.target
    rng = rng or Rng(0)
    current = _current_emd(task, state, target)
    bases = _scored_candidates(task, state, target, top=k + 3)
    accepted: list[ActionPrimitive] = []
    base_idx = 0
    stalls = 0
    while len(accepted) < k and stalls < 8 * k + 16:
        score, base = bases[base_idx % len(bases)]
        base_idx += 1
        jitter = (rng.uniforms(4) * 2.0 - 1.0) * AUX_JITTER
        params = np.clip(base.params + jitter, 0.0, 1.0)
        cand = ActionPrimitive(base.kind, params)
        distinct = all(action_distance(cand, a) >= AUX_MIN_DISTANCE for a in accepted)
        if distinct and _post_step_emd(task, state, cand, target) < current - 1e-9:
            accepted.append(cand)
        else:
            stalls += 1
    while len(accepted) < k:
        # degenerate states: fall back to the best base with a fresh jitter,
        # keeping pairwise separation
        _, base = bases[0]
        jitter = (rng.uniforms(4) * 2.0 - 1.0) * AUX_JITTER
        cand = ActionPrimitive(base.kind, np.clip(base.params + jitter, 0.0, 1.0))
        if all(action_distance(cand, a) >= AUX_MIN_DISTANCE for a in accepted):
            accepted.append(cand)
    return accepted


def oracle_rank(task, state, candidates, target=None) -> OracleRanking:
    """Group and sort candidates by post-step EMD.

    Candidates that worsen EMD beyond the threshold are unrankable; the
    rest are ordered by ascending post-step EMD with index tie-breaks.
    """
    if not candidates:
        raise ValueError("no candidates to rank")
    target = target or task.target
    current = _current_emd(task, state, target)
    post = [_post_step_emd(task, state, c, target) for c in candidates]
    unrankable = tuple(i for i, p in enumerate(post) if p > current + UNRANKABLE_EMD_WORSENING)
    rankable = [i for i in range(len(candidates)) if i not in set(unrankable)]
    ordering = tuple(sorted(rankable, key=lambda i: (post[i], i)))
    return OracleRanking(ordering=ordering, unrankable=unrankable,
                         optimal_action=expert_action(task, state, target))


def rank_scores(task, state, candidates, target=None) -> list:
    """Post-step EMD per candidate (the oracle's raw scoring), for tests
    and correlation measurements."""
    target = target or task.target
    return [_post_step_emd(task, state, c, target) for c in candidates]
