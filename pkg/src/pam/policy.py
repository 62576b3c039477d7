"""Conditional diffusion policy over action primitives.

A permutation-invariant point-set encoder (per-point MLP, split
mean/max pooling) produces a context vector; a noise-prediction head
maps (noisy action, context, timestep features) to predicted noise.
Inference draws N actions in one batched reverse pass with one shared
context and independent per-sample noise streams, so altering one
sample's stream never touches another's output.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from pam import config, diffusion, nn
from pam.actions import ActionPrimitive, PointSet
from pam.diffusion import NoiseSchedule, t_embedding
from pam.rng import Rng

log = logging.getLogger(__name__)

HEAD_INPUT_DIM = config.ACTION_DIM + config.CONTEXT_DIM + config.T_EMBED_DIM


@dataclass
class PolicyNet:
    encoder: nn.Mlp
    head: nn.Mlp
    action_kind: str
    schedule: NoiseSchedule

    def copy(self) -> "PolicyNet":
        return PolicyNet(self.encoder.copy(), self.head.copy(), self.action_kind, self.schedule)

    def descriptor(self) -> dict:
        return {
            "encoder_dims": list(self.encoder.dims),
            "head_dims": list(self.head.dims),
            "action_kind": self.action_kind,
            "point_count": config.OBS_POINTS,
            "context_dim": config.CONTEXT_DIM,
            "t_embed_dim": config.T_EMBED_DIM,
        }


@dataclass
class PolicyGrads:
    encoder: nn.Mlp
    head: nn.Mlp


def new_policy(action_kind: str, rng: Rng, schedule: NoiseSchedule | None = None) -> PolicyNet:
    schedule = schedule or NoiseSchedule.linear()
    encoder = nn.init_mlp(config.ENCODER_DIMS, rng.spawn(1))
    head = nn.init_mlp(
        (HEAD_INPUT_DIM, config.HEAD_HIDDEN, config.HEAD_HIDDEN, config.ACTION_DIM),
        rng.spawn(2),
    )
    return PolicyNet(encoder=encoder, head=head, action_kind=action_kind, schedule=schedule)


def encode_batch(net: PolicyNet, obs_array: np.ndarray):
    """Contexts for a (B, M, 2) stack of observations, with backward cache.

    Split pooling over the per-point features: the first half of the
    feature vector is mean-pooled (density moments), the second half is
    max-pooled (existence queries). Both reductions are permutation
    invariant; the context dimension equals the per-point feature width.
    """
    b, m, d = obs_array.shape
    if d != net.encoder.dims[0]:
        raise ValueError(f"point dim {d} does not match encoder input {net.encoder.dims[0]}")
    flat = obs_array.reshape(b * m, d)
    feats, cache = nn.forward_batch(net.encoder, flat)
    c = feats.shape[1]
    half = c // 2
    per = feats.reshape(b, m, c)
    mean_part = per[:, :, :half].mean(axis=1)
    max_idx = per[:, :, half:].argmax(axis=1)
    max_part = np.take_along_axis(per[:, :, half:], max_idx[:, None, :], axis=1)[:, 0, :]
    ctx = np.concatenate([mean_part, max_part], axis=1)
    return ctx, (cache, max_idx, m)


def encoder_backward_batch(net: PolicyNet, cache_pack, dctx: np.ndarray, m: int) -> nn.Mlp:
    """Encoder gradients given context gradients.

    Mean-pooled features spread 1/m to every point; max-pooled features
    route their gradient to the argmax point per feature column.
    """
    cache, max_idx, m_cached = cache_pack
    b, c = dctx.shape
    half = c // 2
    dfeat = np.zeros((b, m, c))
    dfeat[:, :, :half] = dctx[:, None, :half] / m
    rows = np.arange(b)[:, None]
    cols = np.arange(half, c)[None, :]
    dfeat[rows, max_idx, cols] += dctx[:, half:]
    grads, _ = nn.backward_batch(net.encoder, cache, dfeat.reshape(b * m, c))
    return grads


def encode(net: PolicyNet, obs: PointSet) -> np.ndarray:
    """Permutation-invariant context vector for one observation."""
    ctx, _ = encode_batch(net, obs.points[None, :, :])
    return ctx[0]


def head_inputs(x_t: np.ndarray, ctx_rows: np.ndarray, ts, t_steps: int) -> np.ndarray:
    emb = t_embedding(ts, t_steps)
    if emb.ndim == 1:
        emb = np.broadcast_to(emb, (x_t.shape[0], emb.shape[0]))
    return np.concatenate([x_t, ctx_rows, emb], axis=1)


class BoundPolicy:
    """Noise-prediction protocol adapter for one observation.

    Encodes the observation once; eps_backward routes gradients through
    both the head and (via the context) the encoder.
    """

    def __init__(self, net: PolicyNet, obs: PointSet):
        self.net = net
        self.obs = obs
        self._pts = obs.points[None, :, :]
        self.ctx, self._enc_cache = encode_batch(net, self._pts)

    def eps(self, x_t: np.ndarray, t: int):
        x = head_inputs(x_t[None, :], self.ctx, t, self.net.schedule.T)
        y, cache = nn.forward_batch(self.net.head, x)
        return y[0], cache

    def eps_backward(self, cache, d_eps: np.ndarray) -> PolicyGrads:
        head_grads, dx = nn.backward_batch(self.net.head, cache, np.asarray(d_eps)[None, :])
        dctx = dx[:, config.ACTION_DIM:config.ACTION_DIM + config.CONTEXT_DIM]
        enc_grads = encoder_backward_batch(self.net, self._enc_cache, dctx, self._pts.shape[1])
        return PolicyGrads(encoder=enc_grads, head=head_grads)

    def eps_fn(self):
        return lambda x_t, t: self.eps(x_t, t)[0]

    def zero_grads(self) -> PolicyGrads:
        return PolicyGrads(encoder=nn.zeros_like_grads(self.net.encoder),
                           head=nn.zeros_like_grads(self.net.head))

    @staticmethod
    def accumulate(acc: PolicyGrads, grads: PolicyGrads, scale: float = 1.0) -> None:
        nn.add_grads(acc.encoder, grads.encoder, scale)
        nn.add_grads(acc.head, grads.head, scale)


def predict_actions(net: PolicyNet, obs: PointSet, n: int, rng: Rng) -> list:
    """Draw n action primitives with one shared context.

    Each sample owns an rng substream; a sample that diverges is retried
    once on a fresh substream before the whole call fails.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    sched = net.schedule
    ctx = encode(net, obs)
    streams = [rng.spawn(i) for i in range(n)]
    x = np.stack([s.normals(config.ACTION_DIM) for s in streams])
    diverged = np.zeros(n, dtype=bool)
    ctx_rows = np.broadcast_to(ctx, (n, ctx.shape[0]))
    for t in range(sched.T, 0, -1):
        inp = head_inputs(x, ctx_rows, t, sched.T)
        eps_hat, _ = nn.forward_batch(net.head, inp)
        x = diffusion.reverse_mean(sched, x, eps_hat, t)
        if t > 1:
            noise = np.stack([s.normals(config.ACTION_DIM) for s in streams])
            x = x + np.sqrt(sched.posterior_var(t)) * noise
        bad = ~np.isfinite(x).all(axis=1)
        if bad.any():
            diverged |= bad
            x[bad] = 0.0  # frozen; retried below
    for i in np.nonzero(diverged)[0]:
        log.warning("sample %d diverged; retrying on a fresh substream", i)
        retry = rng.spawn(n + int(i))
        bound = BoundPolicy(net, obs)
        x[i] = diffusion.ddpm_sample(sched, bound.eps_fn(), config.ACTION_DIM, retry)
    return [ActionPrimitive.from_normalized(net.action_kind, x[i]) for i in range(n)]


def _expand_pairs(records) -> tuple:
    """Flatten SL records to (obs_stack, pair_obs_idx, clean_action_matrix)."""
    obs_stack = np.stack([np.asarray(r.obs.points) for r in records])
    obs_idx, targets = [], []
    for i, rec in enumerate(records):
        for act in [rec.optimal] + list(rec.auxiliary):
            obs_idx.append(i)
            targets.append(act.normalized())
    return obs_stack, np.array(obs_idx, dtype=np.int64), np.stack(targets)


# Minimum Monte-Carlo (t, eps) draws per epoch; tiny datasets get extra
# draws per pair so the gradient estimator stays usable.
MIN_EPOCH_DRAWS = 256


def supervised_epoch(net: PolicyNet, obs_stack, obs_idx, a0, rng: Rng,
                     ts=None, eps=None):
    """One full-batch pass: mean denoising loss and parameter gradients.

    Each pair contributes draws_per_pair = ceil(MIN_EPOCH_DRAWS / P)
    independent (t, eps) terms, so one epoch sees at least
    MIN_EPOCH_DRAWS loss terms regardless of dataset size. Explicit
    (ts, eps) arrays override the draws for gradient checks.
    """
    sched = net.schedule
    p = a0.shape[0]
    if ts is None:
        reps = max(1, -(-MIN_EPOCH_DRAWS // p))
        row_idx = np.tile(np.arange(p, dtype=np.int64), reps)
        ts = rng.randints(row_idx.size, 1, sched.T)
        eps = rng.normals((row_idx.size, config.ACTION_DIM))
    else:
        ts = np.asarray(ts)
        row_idx = np.arange(p, dtype=np.int64) if ts.size == p else np.tile(np.arange(p), ts.size // p)
    n_rows = row_idx.size
    ab = sched.alpha_bars[np.asarray(ts) - 1]
    x_t = np.sqrt(ab)[:, None] * a0[row_idx] + np.sqrt(1.0 - ab)[:, None] * eps
    ctx, enc_cache = encode_batch(net, obs_stack)
    row_obs = obs_idx[row_idx]
    inp = head_inputs(x_t, ctx[row_obs], ts, sched.T)
    eps_hat, head_cache = nn.forward_batch(net.head, inp)
    resid = eps_hat - eps
    loss = float((resid ** 2).sum(axis=1).mean())
    head_grads, dx = nn.backward_batch(net.head, head_cache, 2.0 * resid / n_rows)
    dctx_rows = dx[:, config.ACTION_DIM:config.ACTION_DIM + config.CONTEXT_DIM]
    dctx = np.zeros_like(ctx)
    np.add.at(dctx, row_obs, dctx_rows)
    enc_grads = encoder_backward_batch(net, enc_cache, dctx, obs_stack.shape[1])
    return loss, PolicyGrads(encoder=enc_grads, head=head_grads)


def train_supervised(net: PolicyNet, records, epochs: int, rng: Rng,
                     lr: float = config.SL_LR) -> list:
    """Full-batch training on (observation, action) pairs; auxiliary
    actions enter as independent targets. Returns the per-epoch loss curve."""
    if not records:
        raise ValueError("empty supervised dataset")
    obs_stack, obs_idx, a0 = _expand_pairs(records)
    enc_state = nn.adam_init(net.encoder)
    head_state = nn.adam_init(net.head)
    curve = []
    for _ in range(epochs):
        loss, grads = supervised_epoch(net, obs_stack, obs_idx, a0, rng)
        if not np.isfinite(loss):
            log.warning("non-finite supervised loss; batch skipped")
            curve.append(float("nan"))
            continue
        nn.adam_step(net.encoder, grads.encoder, enc_state, lr,
                     beta1=config.ADAM_BETA1, beta2=config.ADAM_BETA2)
        nn.adam_step(net.head, grads.head, head_state, lr,
                     beta1=config.ADAM_BETA1, beta2=config.ADAM_BETA2)
        curve.append(loss)
    return curve
