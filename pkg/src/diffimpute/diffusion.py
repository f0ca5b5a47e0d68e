"""Core Gaussian diffusion math: noise schedule, forward process, reverse mean.

All functions here are pure and operate on numpy arrays in float64. Step
indices follow the convention that ``t = 0`` is clean data, so the cumulative
signal-retention factor at step 0 is exactly 1 and the posterior variance of
the first step is exactly 0. Schedule arrays are stored for steps 1..T, i.e.
``betas[i]`` belongs to step ``t = i + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step constants of a T-step diffusion.

    Fields (all shape ``(T,)``, indexed by ``t - 1``):
      betas:       per-step noise variances, each in (0, 1)
      alphas:      1 - betas
      alpha_bars:  running products of alphas (signal retention at step t)
      tilde_betas: posterior variances beta_t * (1 - abar_{t-1}) / (1 - abar_t),
                   with abar_0 := 1, which forces tilde_betas[0] == 0
    """

    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    tilde_betas: np.ndarray

    @property
    def num_steps(self) -> int:
        return int(self.betas.shape[0])

    def beta(self, t: int) -> float:
        self._check_step(t, lowest=1)
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        self._check_step(t, lowest=1)
        return float(self.alphas[t - 1])

    def alpha_bar(self, t: int) -> float:
        """Signal retention at step t; exactly 1.0 for t = 0."""
        self._check_step(t, lowest=0)
        if t == 0:
            return 1.0
        return float(self.alpha_bars[t - 1])

    def tilde_beta(self, t: int) -> float:
        self._check_step(t, lowest=1)
        return float(self.tilde_betas[t - 1])

    def _check_step(self, t: int, lowest: int) -> None:
        if not lowest <= t <= self.num_steps:
            raise ValueError(
                f"step index {t} outside [{lowest}, {self.num_steps}]"
            )


def build_linear_schedule(
    num_steps: int, beta_start: float = 1e-4, beta_end: float = 0.2
) -> NoiseSchedule:
    """Linearly interpolated beta schedule, inclusive of both endpoints.

    The defaults are calibrated so that at ``num_steps = 100`` the terminal
    signal retention is ~2e-5, i.e. the terminal state is near-pure noise.
    """
    if num_steps < 1:
        raise ValueError(f"num_steps must be >= 1, got {num_steps}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"require 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    betas = np.linspace(beta_start, beta_end, num_steps, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    # abar_0 := 1 makes the first posterior variance exactly zero.
    prev_bars = np.concatenate(([1.0], alpha_bars[:-1]))
    tilde_betas = betas * (1.0 - prev_bars) / (1.0 - alpha_bars)
    return NoiseSchedule(
        betas=betas, alphas=alphas, alpha_bars=alpha_bars, tilde_betas=tilde_betas
    )


def _check_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if np.shape(a) != np.shape(b):
        raise ValueError(f"{what}: shape mismatch {np.shape(a)} vs {np.shape(b)}")


def forward_step(
    x_prev: np.ndarray, t: int, noise: np.ndarray, sched: NoiseSchedule
) -> np.ndarray:
    """One step of the noising chain: sqrt(1-beta_t)*x + sqrt(beta_t)*noise."""
    beta = sched.beta(t)
    _check_same_shape(x_prev, noise, "forward_step")
    return np.sqrt(1.0 - beta) * x_prev + np.sqrt(beta) * noise


def forward_sample(
    x0: np.ndarray, t: int, noise: np.ndarray, sched: NoiseSchedule
) -> np.ndarray:
    """Closed-form jump to step t: sqrt(abar_t)*x0 + sqrt(1-abar_t)*noise.

    ``t = 0`` returns ``x0`` unchanged (the noise term has zero coefficient).
    """
    abar = sched.alpha_bar(t)
    _check_same_shape(x0, noise, "forward_sample")
    return np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * noise


def reverse_mean(
    x_t: np.ndarray, t: int, eps_pred: np.ndarray, sched: NoiseSchedule
) -> np.ndarray:
    """Posterior mean given a noise prediction:

        (x_t - beta_t / sqrt(1 - abar_t) * eps_pred) / sqrt(alpha_t)
    """
    _check_same_shape(x_t, eps_pred, "reverse_mean")
    alpha = sched.alpha(t)
    beta = sched.beta(t)
    abar = sched.alpha_bar(t)
    return (x_t - beta / np.sqrt(1.0 - abar) * eps_pred) / np.sqrt(alpha)


def noise_prediction_loss(eps_true: np.ndarray, eps_pred: np.ndarray) -> float:
    """Mean squared error over all entries (mean reduction)."""
    _check_same_shape(eps_true, eps_pred, "noise_prediction_loss")
    diff = np.asarray(eps_true, dtype=np.float64) - np.asarray(
        eps_pred, dtype=np.float64
    )
    return float(np.mean(diff * diff))
