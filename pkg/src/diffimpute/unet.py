"""Multi-scale denoising U-Net over the time axis.

Each block normalizes across channels, mixes time with per-channel diagonal
state-space kernels (or a plain depthwise convolution in the ablation
variant), applies a pointwise channel MLP, and adds a linear residual of the
block input. Levels halve the temporal resolution and widen the channels;
decoder levels concatenate the matching encoder output. The diffusion step
enters every block through a sinusoidal embedding followed by a per-block
affine (scale/shift) map.

The state-space kernels keep strictly real tensors: complex diagonal states
are carried as (real, imaginary) parts and powers are taken in polar form,
mirroring the reference formulas in ``ssm.py``.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F


def sinusoidal_embedding(t: torch.Tensor, dim: int, max_period: float = 10000.0):
    """Standard sin/cos embedding of (possibly fractional) step indices."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(max_period)
        * torch.arange(half, dtype=t.dtype, device=t.device)
        / half
    )
    args = t[:, None] * freqs[None, :]
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
    if dim % 2:
        emb = torch.cat([emb, torch.zeros_like(emb[:, :1])], dim=-1)
    return emb


class ChannelLayerNorm(nn.Module):
    """LayerNorm across channels at each time step for (B, C, L) inputs."""

    def __init__(self, channels: int):
        super().__init__()
        self.norm = nn.LayerNorm(channels)

    def forward(self, x):
        return self.norm(x.transpose(1, 2)).transpose(1, 2)


class SSMTimeLayer(nn.Module):
    """Per-channel diagonal state-space convolution along time.

    Parameters follow the diagonal parameterization: continuous-time poles
    a = -exp(log_a_re) + i*a_im (negative real part by construction), input
    vector fixed at 1, learned complex output projection, one log time step
    per channel. ``bidirectional`` adds a second kernel bank applied to the
    time-reversed sequence so the layer sees both past and future context.
    """

    def __init__(
        self,
        channels: int,
        state_dim: int = 16,
        bidirectional: bool = True,
        init: str = "lin",
        dt_min: float = 1e-3,
        dt_max: float = 1e-1,
    ):
        super().__init__()
        if init not in ("lin", "real"):
            raise ValueError(f"unknown ssm init {init!r}")
        self.channels = channels
        self.state_dim = state_dim
        self.bidirectional = bidirectional
        n_dir = 2 if bidirectional else 1

        if init == "lin":
            log_a_re = torch.full((n_dir, channels, state_dim), math.log(0.5))
            a_im = (
                math.pi
                * torch.arange(state_dim, dtype=torch.float32)
                .expand(n_dir, channels, state_dim)
                .clone()
            )
        else:
            log_a_re = torch.log(
                torch.arange(1, state_dim + 1, dtype=torch.float32)
            ).expand(n_dir, channels, state_dim).clone()
            a_im = torch.zeros(n_dir, channels, state_dim)
        self.log_a_re = nn.Parameter(log_a_re)
        self.a_im = nn.Parameter(a_im)
        self.c_re = nn.Parameter(
            torch.randn(n_dir, channels, state_dim) * math.sqrt(0.5)
        )
        self.c_im = nn.Parameter(
            torch.randn(n_dir, channels, state_dim) * math.sqrt(0.5)
        )
        self.log_dt = nn.Parameter(
            torch.rand(n_dir, channels) * (math.log(dt_max) - math.log(dt_min))
            + math.log(dt_min)
        )
        self.skip = nn.Parameter(torch.randn(channels))

    def kernel(self, length: int) -> torch.Tensor:
        """Materialize the (n_dir, C, L) causal kernels in real arithmetic."""
        dt = torch.exp(self.log_dt)[..., None]  # (dir, C, 1)
        a_re = -torch.exp(self.log_a_re)
        a_im = self.a_im
        # bilinear transform: (1 + dt/2 a) / (1 - dt/2 a), b fixed at 1
        num_re, num_im = 1.0 + 0.5 * dt * a_re, 0.5 * dt * a_im
        den_re, den_im = 1.0 - 0.5 * dt * a_re, -0.5 * dt * a_im
        den_sq = den_re * den_re + den_im * den_im
        abar_re = (num_re * den_re + num_im * den_im) / den_sq
        abar_im = (num_im * den_re - num_re * den_im) / den_sq
        bbar_re = dt * den_re / den_sq
        bbar_im = -dt * den_im / den_sq
        cb_re = self.c_re * bbar_re - self.c_im * bbar_im
        cb_im = self.c_re * bbar_im + self.c_im * bbar_re
        # powers of abar in polar form
        radius = torch.sqrt(abar_re * abar_re + abar_im * abar_im)
        angle = torch.atan2(abar_im, abar_re)
        steps = torch.arange(length, dtype=dt.dtype, device=dt.device)
        log_mag = steps * torch.log(radius)[..., None]  # (dir, C, N, L)
        phase = steps * angle[..., None]
        mag = torch.exp(log_mag)
        k = (
            cb_re[..., None] * torch.cos(phase) - cb_im[..., None] * torch.sin(phase)
        ) * mag
        return k.sum(dim=2)

    @staticmethod
    def _causal_conv(x, k):
        # x: (B, C, L), k: (C, L); left-pad so y_t only sees u_{<=t}
        length = x.shape[-1]
        return F.conv1d(
            F.pad(x, (length - 1, 0)),
            k.flip(-1).unsqueeze(1),
            groups=x.shape[1],
        )

    def forward(self, x):
        k = self.kernel(x.shape[-1])
        y = self._causal_conv(x, k[0])
        if self.bidirectional:
            y = y + self._causal_conv(x.flip(-1), k[1]).flip(-1)
        return y + self.skip[None, :, None] * x


class ConvTimeLayer(nn.Module):
    """Depthwise short convolution; the limited-receptive-field ablation."""

    def __init__(self, channels: int, kernel_size: int = 5):
        super().__init__()
        self.conv = nn.Conv1d(
            channels, channels, kernel_size, padding=kernel_size // 2, groups=channels
        )

    def forward(self, x):
        return self.conv(x)


class TemporalBlock(nn.Module):
    """Normalize, mix time, activate, mix channels, add a linear residual."""

    def __init__(
        self,
        channels: int,
        emb_dim: int,
        mlp_hidden: int | None = None,
        block_kind: str = "ssm",
        state_dim: int = 16,
        bidirectional: bool = True,
        ssm_init: str = "lin",
    ):
        super().__init__()
        mlp_hidden = mlp_hidden or 2 * channels
        if mlp_hidden < channels:
            raise ValueError("mlp_hidden must be >= channels")
        self.norm = ChannelLayerNorm(channels)
        if block_kind == "ssm":
            self.time_layer = SSMTimeLayer(
                channels,
                state_dim=state_dim,
                bidirectional=bidirectional,
                init=ssm_init,
            )
        elif block_kind == "conv":
            self.time_layer = ConvTimeLayer(channels)
        else:
            raise ValueError(f"unknown block kind {block_kind!r}")
        self.mlp = nn.Sequential(
            nn.Conv1d(channels, mlp_hidden, 1),
            nn.GELU(),
            nn.Conv1d(mlp_hidden, channels, 1),
        )
        self.residual = nn.Conv1d(channels, channels, 1)
        self.step_mod = nn.Linear(emb_dim, 2 * channels)
        nn.init.zeros_(self.step_mod.weight)
        nn.init.zeros_(self.step_mod.bias)

    def forward(self, x, emb):
        y = self.norm(x)
        scale, shift = self.step_mod(emb)[:, :, None].chunk(2, dim=1)
        y = y * (1.0 + scale) + shift
        y = self.time_layer(y)
        y = F.gelu(y)
        y = self.mlp(y)
        return y + self.residual(x)


class Downsample(nn.Module):
    def __init__(self, c_in: int, c_out: int, pool: int):
        super().__init__()
        self.pool = nn.AvgPool1d(pool)
        self.proj = nn.Conv1d(c_in, c_out, 1)

    def forward(self, x):
        return self.proj(self.pool(x))


class Upsample(nn.Module):
    def __init__(self, c_in: int, c_out: int, pool: int):
        super().__init__()
        self.factor = pool
        self.proj = nn.Conv1d(c_in, c_out, 1)

    def forward(self, x):
        return self.proj(F.interpolate(x, scale_factor=self.factor, mode="nearest"))


class Denoiser(nn.Module):
    """Noise predictor eps(x_t, t, known values, mask) on (B, L, D) windows.

    Conditioning is channel-wise concatenation of the noisy input, the
    zero-filled known values, and the mask; the unconditional variant takes
    the noisy input alone and ignores the conditioning arguments.
    """

    def __init__(
        self,
        window_length: int,
        channels: int,
        num_steps: int,
        conditional: bool = True,
        widths=(32, 64, 128),
        pool: int = 2,
        emb_dim: int = 64,
        block_kind: str = "ssm",
        state_dim: int = 16,
        mlp_ratio: float = 2.0,
        bidirectional: bool = True,
        ssm_init: str = "lin",
    ):
        super().__init__()
        widths = tuple(int(w) for w in widths)
        levels = len(widths)
        if levels < 2:
            raise ValueError("need at least 2 levels")
        if any(b >= a for a, b in zip(widths[1:], widths[:-1])):
            raise ValueError(f"widths must increase, got {widths}")
        if window_length % pool ** (levels - 1):
            raise ValueError(
                f"window length {window_length} not divisible by "
                f"{pool ** (levels - 1)}"
            )
        self.window_length = window_length
        self.channels = channels
        self.num_steps = num_steps
        self.conditional = conditional
        self.levels = levels

        def block(c):
            return TemporalBlock(
                c,
                emb_dim,
                mlp_hidden=int(round(mlp_ratio * c)),
                block_kind=block_kind,
                state_dim=state_dim,
                bidirectional=bidirectional,
                ssm_init=ssm_init,
            )

        in_ch = 3 * channels if conditional else channels
        self.in_proj = nn.Conv1d(in_ch, widths[0], 1)
        self.emb_mlp = nn.Sequential(
            nn.Linear(emb_dim, emb_dim), nn.SiLU(), nn.Linear(emb_dim, emb_dim)
        )
        self.emb_dim = emb_dim
        self.enc_blocks = nn.ModuleList(block(w) for w in widths)
        self.downs = nn.ModuleList(
            Downsample(widths[i], widths[i + 1], pool) for i in range(levels - 1)
        )
        self.ups = nn.ModuleList(
            Upsample(widths[i + 1], widths[i], pool)
            for i in reversed(range(levels - 1))
        )
        self.merges = nn.ModuleList(
            nn.Conv1d(2 * widths[i], widths[i], 1) for i in reversed(range(levels - 1))
        )
        self.dec_blocks = nn.ModuleList(
            block(widths[i]) for i in reversed(range(levels - 1))
        )
        self.out_proj = nn.Conv1d(widths[0], channels, 1)
        nn.init.zeros_(self.out_proj.weight)
        nn.init.zeros_(self.out_proj.bias)

    def forward(self, x_t, t, x_known=None, mask=None):
        if x_t.dim() != 3 or x_t.shape[1:] != (self.window_length, self.channels):
            raise ValueError(
                f"expected (B, {self.window_length}, {self.channels}), "
                f"got {tuple(x_t.shape)}"
            )
        if not torch.is_tensor(t):
            t = torch.full((x_t.shape[0],), int(t), device=x_t.device)
        if t.min() < 1 or t.max() > self.num_steps:
            raise ValueError(f"step index outside [1, {self.num_steps}]")

        if self.conditional:
            if x_known is None or mask is None:
                raise ValueError("conditional denoiser needs x_known and mask")
            h = torch.cat([x_t, x_known * mask, mask], dim=-1)
        else:
            h = x_t
        h = h.transpose(1, 2)  # (B, C, L)
        emb = self.emb_mlp(sinusoidal_embedding(t.to(x_t.dtype), self.emb_dim))

        h = self.in_proj(h)
        skips = []
        for i, blk in enumerate(self.enc_blocks):
            h = blk(h, emb)
            if i < self.levels - 1:
                skips.append(h)
                h = self.downs[i](h)
        for up, merge, blk in zip(self.ups, self.merges, self.dec_blocks):
            h = up(h)
            h = merge(torch.cat([h, skips.pop()], dim=1))
            h = blk(h, emb)
        return self.out_proj(h).transpose(1, 2)
