"""Dense feed-forward networks with hand-rolled reverse-mode gradients.

Only the fixed architectures this pipeline needs: fully connected
layers, tanh on hidden layers, identity output. numpy carries the
matrix products; the backward pass is written out explicitly so
gradients are exact and auditable against finite differences.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from pam.rng import Rng

log = logging.getLogger(__name__)


@dataclass
class Mlp:
    """Layer parameters: weights[i] is (fan_in, fan_out), biases[i] is (fan_out,)."""

    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    @property
    def dims(self) -> tuple:
        return tuple([self.weights[0].shape[0]] + [w.shape[1] for w in self.weights])

    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def init_mlp(dims, rng: Rng) -> Mlp:
    """Glorot-uniform weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = (rng.uniforms(fan_in * fan_out) * 2.0 - 1.0) * bound
        weights.append(w.reshape(fan_in, fan_out))
        biases.append(np.zeros(fan_out))
    return Mlp(weights, biases)


def forward_batch(mlp: Mlp, x: np.ndarray):
    """Batched forward pass.

    x is (n, d_in); returns (y, cache) where cache holds per-layer
    activations for the backward pass. Hidden layers apply tanh, the
    final layer is linear.
    """
    acts = [x]
    h = x
    n_layers = len(mlp.weights)
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = h @ w + b
        h = np.tanh(z) if i < n_layers - 1 else z
        acts.append(h)
    return h, acts


def backward_batch(mlp: Mlp, cache: list, dy: np.ndarray):
    """Gradients of sum(y * dy) w.r.t. parameters and the input batch.

    Returns (grads, dx) with grads shaped like the Mlp.
    """
    n_layers = len(mlp.weights)
    d_ws = [None] * n_layers
    d_bs = [None] * n_layers
    delta = dy
    for i in range(n_layers - 1, -1, -1):
        if i < n_layers - 1:
            # cache[i + 1] already holds tanh(z)
            delta = delta * (1.0 - cache[i + 1] ** 2)
        d_ws[i] = cache[i].T @ delta
        d_bs[i] = delta.sum(axis=0)
        delta = delta @ mlp.weights[i].T
    return Mlp(d_ws, d_bs), delta


def forward(mlp: Mlp, x: np.ndarray) -> np.ndarray:
    """Single-vector forward pass; raises on dimension mismatch."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != mlp.weights[0].shape[0]:
        raise ValueError(f"input dim {x.shape} does not match first layer {mlp.weights[0].shape}")
    y, _ = forward_batch(mlp, x[None, :])
    return y[0]


def backward(mlp: Mlp, x: np.ndarray, output_grad: np.ndarray):
    """Gradients of <output, output_grad> for a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(output_grad, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != mlp.weights[0].shape[0]:
        raise ValueError(f"input dim {x.shape} does not match first layer {mlp.weights[0].shape}")
    if g.shape != (mlp.weights[-1].shape[1],):
        raise ValueError(f"output_grad dim {g.shape} does not match last layer {mlp.weights[-1].shape}")
    _, cache = forward_batch(mlp, x[None, :])
    grads, dx = backward_batch(mlp, cache, g[None, :])
    return grads, dx[0]


def zeros_like_grads(mlp: Mlp) -> Mlp:
    return Mlp([np.zeros_like(w) for w in mlp.weights], [np.zeros_like(b) for b in mlp.biases])


def add_grads(acc: Mlp, grads: Mlp, scale: float = 1.0) -> None:
    for i in range(len(acc.weights)):
        acc.weights[i] += scale * grads.weights[i]
        acc.biases[i] += scale * grads.biases[i]


def flatten_params(mlp: Mlp) -> np.ndarray:
    return np.concatenate([a.ravel() for pair in zip(mlp.weights, mlp.biases) for a in pair])


def unflatten_params(flat: np.ndarray, dims) -> Mlp:
    weights, biases = [], []
    pos = 0
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(flat[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out).copy())
        pos += fan_in * fan_out
        biases.append(flat[pos:pos + fan_out].copy())
        pos += fan_out
    if pos != flat.size:
        raise ValueError(f"parameter vector length {flat.size} does not match dims {tuple(dims)}")
    return Mlp(weights, biases)


@dataclass
class AdamState:
    m: Mlp
    v: Mlp
    step: int = 0


def adam_init(mlp: Mlp) -> AdamState:
    return AdamState(m=zeros_like_grads(mlp), v=zeros_like_grads(mlp))


def adam_step(mlp: Mlp, grads: Mlp, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> bool:
    """One Adam update in place. Returns False (params and state untouched)
    when any gradient entry is non-finite."""
    for g in grads.weights + grads.biases:
        if not np.all(np.isfinite(g)):
            log.warning("non-finite gradients; batch rejected, optimizer state unchanged")
            return False
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for i in range(len(mlp.weights)):
        for param, grad, m, v in (
            (mlp.weights[i], grads.weights[i], state.m.weights[i], state.v.weights[i]),
            (mlp.biases[i], grads.biases[i], state.m.biases[i], state.v.biases[i]),
        ):
            m *= beta1
            m += (1.0 - beta1) * grad
            v *= beta2
            v += (1.0 - beta2) * grad * grad
            param -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return True
