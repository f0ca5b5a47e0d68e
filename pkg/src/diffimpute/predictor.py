"""One-shot transformer predictor of a full window from its observed values.

The predictor embeds each time step (observed values plus the mask, so it
knows which cells are trustworthy), adds a learned positional table, runs a
stack of multi-head attention blocks, and maps the latent sequence to all
(time, channel) outputs in a single pass. Every output column is produced
simultaneously; nothing is fed back, so there is no error accumulation.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn


class AttentionBlock(nn.Module):
    """Scaled dot-product multi-head attention + BatchNorm + feed-forward,
    both wrapped with residual connections."""

    def __init__(self, latent_dim: int, heads: int, ffn_hidden: int):
        super().__init__()
        if latent_dim % heads:
            raise ValueError(f"heads {heads} must divide latent dim {latent_dim}")
        self.heads = heads
        self.head_dim = latent_dim // heads
        self.w_query = nn.Linear(latent_dim, latent_dim, bias=False)
        self.w_key = nn.Linear(latent_dim, latent_dim, bias=False)
        self.w_value = nn.Linear(latent_dim, latent_dim, bias=False)
        self.w_out = nn.Linear(latent_dim, latent_dim)
        self.norm = nn.BatchNorm1d(latent_dim)
        self.ffn = nn.Sequential(
            nn.Linear(latent_dim, ffn_hidden),
            nn.GELU(),
            nn.Linear(ffn_hidden, latent_dim),
        )

    def attend(self, x):
        """Returns (per-head context, attention weights (B, H, L, L))."""
        b, length, dim = x.shape
        def split(t):
            return t.view(b, length, self.heads, self.head_dim).transpose(1, 2)
        q, k, v = split(self.w_query(x)), split(self.w_key(x)), split(self.w_value(x))
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        weights = torch.softmax(scores, dim=-1)
        context = weights @ v  # (B, H, L, dk)
        context = context.transpose(1, 2).reshape(b, length, dim)
        return context, weights

    def forward(self, x):
        context, _ = self.attend(x)
        h = x + self.w_out(context)
        h = self.norm(h.transpose(1, 2)).transpose(1, 2)
        return h + self.ffn(h)


class OneShotPredictor(nn.Module):
    def __init__(
        self,
        window_length: int,
        channels: int,
        latent_dim: int = 64,
        heads: int = 4,
        blocks: int = 2,
        ffn_hidden: int = 128,
    ):
        super().__init__()
        self.window_length = window_length
        self.channels = channels
        self.latent_dim = latent_dim
        # no bias: the positional table absorbs any per-position offset
        self.in_proj = nn.Linear(2 * channels, latent_dim, bias=False)
        self.positional = nn.Parameter(torch.randn(window_length, latent_dim) * 0.02)
        self.blocks = nn.ModuleList(
            AttentionBlock(latent_dim, heads, ffn_hidden) for _ in range(blocks)
        )
        self.channel_head = nn.Linear(latent_dim, channels)
        # Per-channel linear map over the flattened time axis; identity-plus-
        # noise start so early training behaves like the pointwise head.
        eye = torch.eye(window_length).expand(channels, -1, -1).clone()
        self.time_mix = nn.Parameter(eye + 0.02 * torch.randn_like(eye))
        self.time_bias = nn.Parameter(torch.zeros(channels, window_length))

    def embed(self, x_known, mask):
        """Per-step latent: projection of [observed values ; mask] plus the
        positional table."""
        self._check(x_known, mask)
        return self.in_proj(torch.cat([x_known, mask], dim=-1)) + self.positional

    def forward(self, x_known, mask):
        h = self.embed(x_known, mask)
        for block in self.blocks:
            h = block(h)
        per_step = self.channel_head(h)  # (B, L, D)
        out = torch.einsum("clm,bmc->blc", self.time_mix, per_step)
        return out + self.time_bias.T[None]

    def _check(self, x_known, mask):
        want = (self.window_length, self.channels)
        if x_known.shape[1:] != want or mask.shape != x_known.shape:
            raise ValueError(
                f"expected (B, {want[0]}, {want[1]}) inputs, got "
                f"{tuple(x_known.shape)} and {tuple(mask.shape)}"
            )


def ar_loss(z_ar: np.ndarray, x0: np.ndarray, train_mask: np.ndarray) -> float:
    """Mean squared error restricted to the cells selected by train_mask."""
    z_ar, x0, train_mask = (np.asarray(a, dtype=np.float64) for a in (z_ar, x0, train_mask))
    if not (z_ar.shape == x0.shape == train_mask.shape):
        raise ValueError("ar_loss: shape mismatch")
    total = train_mask.sum()
    if total == 0:
        raise ValueError("ar_loss: empty train_mask (degenerate batch)")
    diff = (z_ar - x0) * train_mask
    return float((diff * diff).sum() / total)


def masked_mse(pred: torch.Tensor, target: torch.Tensor, mask: torch.Tensor):
    """Torch counterpart of ar_loss with a safe denominator, for training."""
    diff = (pred - target) * mask
    return (diff * diff).sum() / mask.sum().clamp(min=1.0)
