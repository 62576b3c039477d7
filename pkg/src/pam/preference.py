"""Preference learning: pair construction, the pairwise-logistic
preference probability, the diffusion preference-finetuning loss, and
the explicit reward-head baseline.

Pair construction combines three groups: ordered pairs inside the
rankable set, every rankable-vs-unrankable pair, and the annotated
optimal action against every candidate. Intra-rankable pairs carry
their rank distance; the other two groups carry the sentinel distance
(the candidate count), being the most confidently ordered.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from pam import config, nn, policy
from pam.actions import ActionPrimitive, PointSet, action_distance
from pam.diffusion import NoiseSchedule, q_jump
from pam.policy import PolicyNet, PolicyGrads
from pam.rng import Rng

log = logging.getLogger(__name__)

REWARD_HEAD_INPUT = config.ACTION_DIM + config.CONTEXT_DIM


@dataclass(frozen=True)
class PreferencePair:
    winner: ActionPrimitive
    loser: ActionPrimitive
    obs: PointSet
    rank_distance: int

    def __post_init__(self):
        if action_distance(self.winner, self.loser) <= 0.0:
            raise ValueError("winner and loser are the same action")
        if self.rank_distance < 1:
            raise ValueError("rank_distance must be >= 1")


def build_pairs(ranking, candidates, obs: PointSet) -> list:
    """All preference pairs implied by one ranked annotation.

    Exact-duplicate (winner == loser) pairs are dropped; they carry no
    preference information and cannot satisfy the pair invariant.
    """
    if not candidates:
        return []
    sentinel = len(candidates)
    pairs = []

    def _emit(winner, loser, distance):
        if action_distance(winner, loser) > 0.0:
            pairs.append(PreferencePair(winner=winner, loser=loser, obs=obs,
                                        rank_distance=distance))

    order = list(ranking.ordering)
    for i in range(len(order)):
        for j in range(i + 1, len(order)):
            _emit(candidates[order[i]], candidates[order[j]], j - i)
    for r in order:
        for u in ranking.unrankable:
            _emit(candidates[r], candidates[u], sentinel)
    for i in range(len(candidates)):
        _emit(ranking.optimal_action, candidates[i], sentinel)
    return pairs


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def softplus(x):
    """log(1 + e^x), stable for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return out if out.ndim else float(out)


def bt_probability(r_w: float, r_l: float) -> float:
    """Probability that the winner beats the loser: logistic of the reward gap."""
    return float(sigmoid(np.float64(r_w - r_l)))


def dpo_loss(schedule: NoiseSchedule, eps_finetune, eps_reference, pair: PreferencePair,
             beta: float, rng: Rng | None = None, t: int | None = None,
             eps: np.ndarray | None = None):
    """Preference-finetuning loss for one pair, one shared (t, eps) draw.

    The same noised winner/loser inputs feed both networks; reference
    terms are constants, so gradients flow only into eps_finetune.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if t is None:
        t = rng.randint(1, schedule.T)
    if eps is None:
        eps = rng.normals(config.ACTION_DIM)
    aw = pair.winner.normalized()
    al = pair.loser.normalized()
    aw_t = q_jump(schedule, aw, t, eps)
    al_t = q_jump(schedule, al, t, eps)

    ew_ft, cache_w = eps_finetune.eps(aw_t, t)
    el_ft, cache_l = eps_finetune.eps(al_t, t)
    ew_ref, _ = eps_reference.eps(aw_t, t)
    el_ref, _ = eps_reference.eps(al_t, t)

    def err(e):
        d = eps - e
        return float(d @ d)

    bracket = (err(ew_ft) - err(ew_ref)) - (err(el_ft) - err(el_ref))
    z = beta * schedule.T * bracket
    loss = softplus(z)
    dz = float(sigmoid(np.float64(z))) * beta * schedule.T
    d_ew = dz * 2.0 * (ew_ft - eps)
    d_el = -dz * 2.0 * (el_ft - eps)
    grads = eps_finetune.zero_grads()
    eps_finetune.accumulate(grads, eps_finetune.eps_backward(cache_w, d_ew))
    eps_finetune.accumulate(grads, eps_finetune.eps_backward(cache_l, d_el))
    return loss, grads


def _dedup_observations(pairs):
    """Stack unique observations; map each pair to its row."""
    keys = {}
    stacks = []
    idx = np.empty(len(pairs), dtype=np.int64)
    for i, pair in enumerate(pairs):
        key = pair.obs.points.tobytes()
        if key not in keys:
            keys[key] = len(stacks)
            stacks.append(pair.obs.points)
        idx[i] = keys[key]
    return np.stack(stacks), idx


class _DpoState:
    """Preference-training workspace: flattened pair arrays, frozen
    reference contexts, optimizer state."""

    def __init__(self, reference: PolicyNet, pairs):
        self.reference = reference
        self.sched = reference.schedule
        self.n_pairs = len(pairs)
        self.obs_stack, self.obs_idx = _dedup_observations(pairs)
        self.winners = np.stack([p.winner.normalized() for p in pairs])
        self.losers = np.stack([p.loser.normalized() for p in pairs])
        self.weights = np.array([p.rank_distance for p in pairs], dtype=np.float64)
        self.ctx_ref, _ = policy.encode_batch(reference, self.obs_stack)


def _dpo_batch(ft: PolicyNet, ws: _DpoState, sel, ts, eps, beta: float,
               with_grads: bool = True):
    """Loss (and gradients) of the preference objective on selected pairs."""
    sched = ws.sched
    oi = ws.obs_idx[sel]
    uniq, inv = np.unique(oi, return_inverse=True)
    ctx_u, enc_cache = policy.encode_batch(ft, ws.obs_stack[uniq])
    ctx_rows = ctx_u[inv]
    ab = sched.alpha_bars[ts - 1]
    sa = np.sqrt(ab)[:, None]
    sb = np.sqrt(1.0 - ab)[:, None]
    x_w = sa * ws.winners[sel] + sb * eps
    x_l = sa * ws.losers[sel] + sb * eps
    e_ft_w, cache_w = nn.forward_batch(ft.head, policy.head_inputs(x_w, ctx_rows, ts, sched.T))
    e_ft_l, cache_l = nn.forward_batch(ft.head, policy.head_inputs(x_l, ctx_rows, ts, sched.T))
    e_ref_w, _ = nn.forward_batch(ws.reference.head,
                                  policy.head_inputs(x_w, ws.ctx_ref[oi], ts, sched.T))
    e_ref_l, _ = nn.forward_batch(ws.reference.head,
                                  policy.head_inputs(x_l, ws.ctx_ref[oi], ts, sched.T))

    err = lambda e: ((eps - e) ** 2).sum(axis=1)
    bracket = (err(e_ft_w) - err(e_ref_w)) - (err(e_ft_l) - err(e_ref_l))
    z = beta * sched.T * bracket
    loss = float(np.mean(softplus(z)))
    if not with_grads:
        return loss, None
    n = len(sel)
    dz = sigmoid(z) * beta * sched.T / n
    d_ew = dz[:, None] * 2.0 * (e_ft_w - eps)
    d_el = -dz[:, None] * 2.0 * (e_ft_l - eps)
    hg_w, dx_w = nn.backward_batch(ft.head, cache_w, d_ew)
    hg_l, dx_l = nn.backward_batch(ft.head, cache_l, d_el)
    nn.add_grads(hg_w, hg_l)
    c0, c1 = config.ACTION_DIM, config.ACTION_DIM + config.CONTEXT_DIM
    dctx = np.zeros_like(ctx_u)
    np.add.at(dctx, inv, dx_w[:, c0:c1])
    np.add.at(dctx, inv, dx_l[:, c0:c1])
    eg = policy.encoder_backward_batch(ft, enc_cache, dctx, ws.obs_stack.shape[1])
    return loss, PolicyGrads(encoder=eg, head=hg_w)


def train_dpo(reference: PolicyNet, pairs, beta: float, epochs: int, rng: Rng,
              lr: float = config.DPO_LR, batch: int = config.DPO_BATCH):
    """Finetune a copy of the reference on preference pairs.

    One epoch is a weighted pass over the dataset in minibatches: pairs
    are drawn with probability proportional to rank_distance, one
    (t, eps) draw per sampled pair, one Adam step per minibatch. The
    loss curve records the full-dataset loss at each epoch start, so
    curve[0] is exactly log 2 when the copy has not moved yet. Returns
    (finetuned net, loss curve).
    """
    if not pairs:
        raise ValueError("empty preference dataset")
    ft = reference.copy()
    ws = _DpoState(reference, pairs)
    n_pairs = ws.n_pairs
    batch = min(batch, n_pairs)
    steps = max(1, n_pairs // batch)
    enc_state = nn.adam_init(ft.encoder)
    head_state = nn.adam_init(ft.head)
    curve = []
    for _ in range(epochs):
        eval_sel = np.arange(n_pairs, dtype=np.int64)
        eval_ts = rng.randints(n_pairs, 1, ws.sched.T)
        eval_eps = rng.normals((n_pairs, config.ACTION_DIM))
        epoch_loss, _ = _dpo_batch(ft, ws, eval_sel, eval_ts, eval_eps, beta, with_grads=False)
        curve.append(epoch_loss)
        for _ in range(steps):
            sel = rng.choice_weighted(n_pairs, ws.weights, batch)
            ts = rng.randints(batch, 1, ws.sched.T)
            eps = rng.normals((batch, config.ACTION_DIM))
            loss, grads = _dpo_batch(ft, ws, sel, ts, eps, beta)
            if not math.isfinite(loss):
                log.warning("non-finite preference loss; batch skipped")
                continue
            nn.adam_step(ft.encoder, grads.encoder, enc_state, lr,
                         beta1=config.ADAM_BETA1, beta2=config.ADAM_BETA2)
            nn.adam_step(ft.head, grads.head, head_state, lr,
                         beta1=config.ADAM_BETA1, beta2=config.ADAM_BETA2)
    return ft, curve


def new_reward_head(rng: Rng) -> nn.Mlp:
    return nn.init_mlp((REWARD_HEAD_INPUT, config.REWARD_HEAD_HIDDEN,
                        config.REWARD_HEAD_HIDDEN, 1), rng)


def reward_scores(head: nn.Mlp, actions_norm: np.ndarray, ctx: np.ndarray) -> np.ndarray:
    """Scalar rewards for normalized actions under one encoded context."""
    rows = np.concatenate([actions_norm, np.broadcast_to(ctx, (len(actions_norm), ctx.shape[0]))], axis=1)
    out, _ = nn.forward_batch(head, rows)
    return out[:, 0]


def explicit_loss_and_grads(head: nn.Mlp, xw: np.ndarray, xl: np.ndarray):
    """Negative log pairwise-logistic likelihood for winner/loser input rows,
    with gradients w.r.t. the head parameters."""
    n = xw.shape[0]
    rw, cache_w = nn.forward_batch(head, xw)
    rl, cache_l = nn.forward_batch(head, xl)
    z = rw[:, 0] - rl[:, 0]
    loss = float(np.mean(softplus(-z)))
    dz = -sigmoid(-z) / n
    gw, _ = nn.backward_batch(head, cache_w, dz[:, None])
    gl, _ = nn.backward_batch(head, cache_l, -dz[:, None])
    nn.add_grads(gw, gl)
    return loss, gw


def train_explicit_reward(reference: PolicyNet, head: nn.Mlp, pairs, epochs: int,
                          rng: Rng, lr: float = config.EXPLICIT_LR):
    """Fit the explicit reward head by maximizing the pairwise-logistic
    likelihood; the reference encoder stays frozen and supplies contexts."""
    if not pairs:
        raise ValueError("empty preference dataset")
    obs_stack, obs_idx = _dedup_observations(pairs)
    winners = np.stack([p.winner.normalized() for p in pairs])
    losers = np.stack([p.loser.normalized() for p in pairs])
    ctx_ref, _ = policy.encode_batch(reference, obs_stack)
    ctx_rows = ctx_ref[obs_idx]
    xw = np.concatenate([winners, ctx_rows], axis=1)
    xl = np.concatenate([losers, ctx_rows], axis=1)
    state = nn.adam_init(head)
    curve = []
    for _ in range(epochs):
        loss, grads = explicit_loss_and_grads(head, xw, xl)
        if not math.isfinite(loss):
            log.warning("non-finite reward-head loss; epoch skipped")
            curve.append(float("nan"))
            continue
        nn.adam_step(head, grads, state, lr,
                     beta1=config.ADAM_BETA1, beta2=config.ADAM_BETA2)
        curve.append(loss)
    return curve


def explicit_pair_accuracy(reference: PolicyNet, head: nn.Mlp, pairs) -> float:
    """Fraction of pairs where the head scores the winner above the loser."""
    obs_stack, obs_idx = _dedup_observations(pairs)
    ctx_ref, _ = policy.encode_batch(reference, obs_stack)
    correct = 0
    for pair, oi in zip(pairs, obs_idx):
        scores = reward_scores(head, np.stack([pair.winner.normalized(),
                                               pair.loser.normalized()]), ctx_ref[oi])
        correct += scores[0] > scores[1]
    return correct / len(pairs)
