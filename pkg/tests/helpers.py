"""Shared test oracles: finite differences, loop-based references."""

import math

import numpy as np

from pam import nn


def finite_diff_grads(loss_fn, mlp, h=1e-5):
    """Central finite differences of loss_fn() w.r.t. every MLP parameter.

    loss_fn must read the live mlp object so perturbations take effect.
    """
    grads = nn.zeros_like_grads(mlp)
    for arrs, outs in ((mlp.weights, grads.weights), (mlp.biases, grads.biases)):
        for a, g in zip(arrs, outs):
            flat_a, flat_g = a.ravel(), g.ravel()
            for i in range(flat_a.size):
                orig = flat_a[i]
                flat_a[i] = orig + h
                lp = loss_fn()
                flat_a[i] = orig - h
                lm = loss_fn()
                flat_a[i] = orig
                flat_g[i] = (lp - lm) / (2.0 * h)
    return grads


def directional_diff(loss_fn, mlp, direction, h=1e-5):
    """Central finite difference of loss_fn along a parameter direction."""

    def axpy(scale):
        for a, d in zip(mlp.weights + mlp.biases, direction.weights + direction.biases):
            a += scale * d

    axpy(h)
    lp = loss_fn()
    axpy(-2.0 * h)
    lm = loss_fn()
    axpy(h)
    return (lp - lm) / (2.0 * h)


def grad_dot(grads, direction):
    return sum(float(np.vdot(g, d)) for g, d in
               zip(grads.weights + grads.biases, direction.weights + direction.biases))


def max_rel_err(analytic, fd, floor=1e-6):
    errs = []
    for a, f in zip(analytic.weights + analytic.biases, fd.weights + fd.biases):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), floor)
        errs.append(float(np.max(np.abs(a - f) / denom)))
    return max(errs)


def rel_err(a, b, floor=1e-6):
    return abs(a - b) / max(abs(a), abs(b), floor)


def reference_mlp_forward(mlp, x):
    """Straightforward nested-loop matrix-vector evaluation."""
    h = [float(v) for v in x]
    n_layers = len(mlp.weights)
    for li, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        out = []
        for j in range(w.shape[1]):
            s = float(b[j])
            for i in range(w.shape[0]):
                s += h[i] * float(w[i, j])
            out.append(s)
        h = [math.tanh(v) for v in out] if li < n_layers - 1 else out
    return np.array(h)


def brute_force_emd(a, b):
    """Minimum mean matched distance over all permutations (sets of size <= 8)."""
    import itertools

    n = len(a)
    best = math.inf
    for perm in itertools.permutations(range(n)):
        total = 0.0
        for i, j in enumerate(perm):
            total += math.dist(a[i], b[j])
        best = min(best, total / n)
    return best
