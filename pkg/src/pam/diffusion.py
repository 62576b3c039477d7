"""Conditional denoising-diffusion machinery for low-dimensional actions.

Forward noising (stepwise and direct-jump), reverse ancestral sampling
with the fixed-posterior-variance update, and the simplified
noise-prediction training objective. Everything is written against an
abstract noise-prediction model:

* ``model.eps(x_t, t) -> (eps_hat, cache)``
* ``model.eps_backward(cache, d_eps) -> grads``

where the conditioning is already bound inside the model object.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pam import config, nn
from pam.rng import Rng


class SampleDiverged(RuntimeError):
    """Reverse sampling hit a non-finite intermediate at timestep ``t``."""

    def __init__(self, t: int):
        super().__init__(f"non-finite sample intermediate at t={t}")
        self.t = t


@dataclass(frozen=True)
class NoiseSchedule:
    """Variance schedule: per-step retention factors and their running products."""

    alphas: np.ndarray       # alpha_t for t = 1..T, index t-1
    alpha_bars: np.ndarray   # prod_{i<=t} alpha_i

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=np.float64)
        ab = np.asarray(self.alpha_bars, dtype=np.float64)
        if a.ndim != 1 or ab.shape != a.shape or a.size < 1:
            raise ValueError("schedule arrays must be equal-length 1-D")
        if np.any(a <= 0.0) or np.any(a >= 1.0):
            raise ValueError("every alpha_t must lie strictly in (0, 1)")
        if np.any(np.diff(ab) >= 0.0):
            raise ValueError("cumulative products must be strictly decreasing")
        if a.size > 1 and ab[-1] >= ab[0]:
            raise ValueError("cumulative product must shrink from t=1 to t=T")
        if np.max(np.abs(ab - np.cumprod(a))) > 1e-12:
            raise ValueError("alpha_bars inconsistent with alphas")
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "alpha_bars", ab)

    @property
    def T(self) -> int:
        return self.alphas.size

    @property
    def betas(self) -> np.ndarray:
        return 1.0 - self.alphas

    def alpha(self, t: int) -> float:
        self._check_t(t)
        return float(self.alphas[t - 1])

    def alpha_bar(self, t: int) -> float:
        """Running product through step t; t=0 returns 1 (clean sample)."""
        if t == 0:
            return 1.0
        self._check_t(t)
        return float(self.alpha_bars[t - 1])

    def posterior_var(self, t: int) -> float:
        """Fixed reverse variance beta_t * (1 - abar_{t-1}) / (1 - abar_t)."""
        self._check_t(t)
        beta = 1.0 - self.alpha(t)
        return beta * (1.0 - self.alpha_bar(t - 1)) / (1.0 - self.alpha_bar(t))

    def _check_t(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ValueError(f"timestep {t} outside [1, {self.T}]")

    @classmethod
    def linear(cls, t_steps: int = config.DIFFUSION_T,
               beta_start: float = config.BETA_START,
               beta_end: float = config.BETA_END) -> "NoiseSchedule":
        betas = np.linspace(beta_start, beta_end, t_steps)
        alphas = 1.0 - betas
        return cls(alphas=alphas, alpha_bars=np.cumprod(alphas))


@dataclass
class NoisyAction:
    """A diffused sample paired with its timestep; t=0 means clean."""

    value: np.ndarray
    t: int

    def __post_init__(self):
        if self.t < 0:
            raise ValueError(f"timestep {self.t} is negative")


def q_step(schedule: NoiseSchedule, x_prev: np.ndarray, t: int, noise: np.ndarray) -> np.ndarray:
    """One forward noising step from x_{t-1} to x_t."""
    a = schedule.alpha(t)
    return np.sqrt(a) * x_prev + np.sqrt(1.0 - a) * noise


def q_jump(schedule: NoiseSchedule, x0: np.ndarray, t: int, noise: np.ndarray) -> np.ndarray:
    """Direct jump from the clean sample to x_t."""
    ab = schedule.alpha_bar(t)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise


def reverse_mean(schedule: NoiseSchedule, x_t: np.ndarray, eps_hat: np.ndarray, t: int) -> np.ndarray:
    """Posterior mean reparameterized through the predicted noise."""
    a = schedule.alpha(t)
    ab = schedule.alpha_bar(t)
    beta = 1.0 - a
    return (x_t - beta / np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(a)


def t_embedding(t, t_steps: int) -> np.ndarray:
    """Timestep features: t/T plus 4 sinusoidal components.

    One slow and one fast frequency pair; the fast pair resolves
    neighboring small timesteps, where noise prediction is steepest.
    Accepts a scalar (returns shape (5,)) or an array (returns (n, 5)).
    """
    frac = np.asarray(t, dtype=np.float64) / t_steps
    feats = np.stack([
        frac,
        np.sin(2.0 * np.pi * frac),
        np.cos(2.0 * np.pi * frac),
        np.sin(32.0 * np.pi * frac),
        np.cos(32.0 * np.pi * frac),
    ], axis=-1)
    return feats


def ddpm_sample(schedule: NoiseSchedule, eps_fn, dim: int, rng: Rng) -> np.ndarray:
    """Ancestral sampling from pure noise down to a clean sample.

    ``eps_fn(x_t, t) -> eps_hat`` with conditioning already bound. The
    final step adds no noise. Raises SampleDiverged on any non-finite
    intermediate.
    """
    x = rng.normals(dim)
    for t in range(schedule.T, 0, -1):
        eps_hat = eps_fn(x, t)
        x = reverse_mean(schedule, x, eps_hat, t)
        if t > 1:
            x = x + np.sqrt(schedule.posterior_var(t)) * rng.normals(dim)
        if not np.all(np.isfinite(x)):
            raise SampleDiverged(t)
    return x


class MlpEpsModel:
    """Noise-prediction model: one MLP over [x_t, condition, t features].

    The conditioning vector is bound at construction. Gradients flow to
    the MLP parameters only; the condition is treated as constant.
    """

    def __init__(self, mlp: nn.Mlp, cond: np.ndarray, t_steps: int):
        self.mlp = mlp
        self.cond = np.asarray(cond, dtype=np.float64)
        self.t_steps = t_steps

    def _input(self, x_t: np.ndarray, t: int) -> np.ndarray:
        return np.concatenate([x_t, self.cond, t_embedding(t, self.t_steps)])

    def eps(self, x_t: np.ndarray, t: int):
        y, cache = nn.forward_batch(self.mlp, self._input(x_t, t)[None, :])
        return y[0], cache

    def eps_backward(self, cache, d_eps: np.ndarray) -> nn.Mlp:
        grads, _ = nn.backward_batch(self.mlp, cache, np.asarray(d_eps)[None, :])
        return grads

    def eps_fn(self):
        """Gradient-free closure for sampling."""
        return lambda x_t, t: self.eps(x_t, t)[0]

    def zero_grads(self) -> nn.Mlp:
        return nn.zeros_like_grads(self.mlp)

    @staticmethod
    def accumulate(acc: nn.Mlp, grads: nn.Mlp, scale: float = 1.0) -> None:
        nn.add_grads(acc, grads, scale)


def l_simple(schedule: NoiseSchedule, model, x0: np.ndarray, rng: Rng | None = None,
             t: int | None = None, eps: np.ndarray | None = None):
    """Noise-prediction training objective for one clean sample.

    Draws (t, eps) from ``rng`` unless given explicitly (tests and
    finite-difference checks pass them in). Returns the squared error
    and the model-parameter gradients.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if t is None:
        t = rng.randint(1, schedule.T)
    if eps is None:
        eps = rng.normals(x0.shape[0])
    x_t = q_jump(schedule, x0, t, eps)
    eps_hat, cache = model.eps(x_t, t)
    resid = eps_hat - eps
    loss = float(resid @ resid)
    grads = model.eps_backward(cache, 2.0 * resid)
    return loss, grads
