"""Reward-guided action selection at inference time.

The supervised policy proposes N candidate actions; a reward derived
from the (finetuned, reference) network pair scores them; the highest
scorer is executed. The finetuned network is never sampled here, it
only serves inside the reward.

The reward expectation is estimated on the smallest 10% of diffusion
timesteps with a fixed number of (t, eps) draws shared across all
candidates for a given observation, which turns candidate comparison
into a paired test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from pam import config, nn, policy, preference
from pam.actions import ActionPrimitive, PointSet
from pam.policy import PolicyNet
from pam.rng import Rng


@dataclass(frozen=True)
class ScoredAction:
    action: ActionPrimitive
    reward: float
    source_index: int

    def __post_init__(self):
        if not math.isfinite(self.reward):
            raise ValueError("reward must be finite")
        if self.source_index < 0:
            raise ValueError("source_index must be >= 0")


def reward_timestep_cap(t_steps: int, fraction: float = config.REWARD_T_FRACTION) -> int:
    """Largest timestep used for reward estimation (inclusive)."""
    return max(1, math.ceil(fraction * t_steps))


def implicit_rewards(finetuned: PolicyNet, reference: PolicyNet, actions,
                     obs: PointSet, beta: float, rng: Rng,
                     draws: int = config.REWARD_DRAWS) -> np.ndarray:
    """Implicit rewards for a candidate batch, shared (t, eps) draws.

    reward(a) = -beta * T * mean over draws of
        (||eps - eps_ft(a_t)||^2 - ||eps - eps_ref(a_t)||^2)
    with t uniform on the smallest 10% of timesteps. Draws come in
    antithetic pairs (each eps used with both signs), which cancels the
    bracket's noise component that is linear in eps.
    """
    if finetuned.head.dims != reference.head.dims or finetuned.encoder.dims != reference.encoder.dims:
        raise ValueError("finetuned/reference architecture mismatch")
    sched = reference.schedule
    t_cap = reward_timestep_cap(sched.T)
    half = max(1, draws // 2)
    ts = rng.randints(half, 1, t_cap)
    eps = rng.normals((half, config.ACTION_DIM))
    a_norm = np.stack([a.normalized() for a in actions])
    n = len(actions)
    ctx_ft = policy.encode(finetuned, obs)
    ctx_ref = policy.encode(reference, obs)
    ctx_ft_rows = np.broadcast_to(ctx_ft, (n, ctx_ft.shape[0]))
    ctx_ref_rows = np.broadcast_to(ctx_ref, (n, ctx_ref.shape[0]))
    acc = np.zeros(n)
    for s in range(half):
        t = int(ts[s])
        ab = sched.alpha_bar(t)
        for sign in (1.0, -1.0):
            e = sign * eps[s]
            x_t = np.sqrt(ab) * a_norm + np.sqrt(1.0 - ab) * e
            e_ft, _ = nn.forward_batch(finetuned.head, policy.head_inputs(x_t, ctx_ft_rows, t, sched.T))
            e_ref, _ = nn.forward_batch(reference.head, policy.head_inputs(x_t, ctx_ref_rows, t, sched.T))
            acc += ((e - e_ft) ** 2).sum(axis=1) - ((e - e_ref) ** 2).sum(axis=1)
    return -beta * sched.T * acc / (2 * half)


def implicit_reward(finetuned: PolicyNet, reference: PolicyNet, action: ActionPrimitive,
                    obs: PointSet, beta: float, rng: Rng,
                    draws: int = config.REWARD_DRAWS) -> float:
    """Single-action convenience wrapper around implicit_rewards."""
    return float(implicit_rewards(finetuned, reference, [action], obs, beta, rng, draws)[0])


def explicit_rewards(reference: PolicyNet, head: nn.Mlp, actions, obs: PointSet) -> np.ndarray:
    """Rewards from the explicit head over the frozen reference context."""
    ctx = policy.encode(reference, obs)
    return preference.reward_scores(head, np.stack([a.normalized() for a in actions]), ctx)


def select_action(candidates, rewards) -> ScoredAction:
    """Greedy argmax over rewards; ties resolve to the lowest index."""
    if len(candidates) == 0:
        raise ValueError("no candidates to select from")
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.shape != (len(candidates),):
        raise ValueError("one reward per candidate required")
    best = int(np.argmax(rewards))
    return ScoredAction(action=candidates[best], reward=float(rewards[best]), source_index=best)


def normalized_rewards(rewards) -> np.ndarray:
    """Min-max normalization per candidate batch (for logging/plots)."""
    r = np.asarray(rewards, dtype=np.float64)
    spread = r.max() - r.min()
    if spread <= 0.0:
        return np.zeros_like(r)
    return (r - r.min()) / spread


def infer_with_ras(sampler: PolicyNet, obs: PointSet, n: int, rng: Rng, scorer):
    """Sample n candidates from the sampler policy, score, pick the argmax.

    ``scorer(actions, obs, score_rng) -> rewards``. Returns the selected
    ScoredAction and the full scored batch for logging. The sampling and
    scoring streams are split so both are reproducible per seed.
    """
    sample_rng = rng.spawn(0)
    score_rng = rng.spawn(1)
    actions = policy.predict_actions(sampler, obs, n, sample_rng)
    rewards = np.asarray(scorer(actions, obs, score_rng), dtype=np.float64)
    scored = [ScoredAction(action=a, reward=float(r), source_index=i)
              for i, (a, r) in enumerate(zip(actions, rewards))]
    return select_action(actions, rewards), scored
