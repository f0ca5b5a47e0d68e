"""Optimization loops for the denoiser and the one-shot predictor.

Both loops use Adam, draw fresh conditioning/hiding masks per sample, track a
deterministic validation loss (the validation noise, steps, and masks are
frozen once per run), and early-stop when validation fails to improve for
``patience`` epochs, restoring the best parameters.
"""

from __future__ import annotations

import copy
import csv
from dataclasses import dataclass

import numpy as np
import torch

from .data import Dataset
from .diffusion import NoiseSchedule
from .errors import NumericError
from .masking import generate_mask
from .predictor import masked_mse


@dataclass
class TrainConfig:
    lr: float = 3e-6
    batch_size: int = 32
    max_epochs: int = 120
    patience: int = 10
    seed: int = 0
    mask_protocol: str = "point"
    mask_rate: float = 0.1
    block_point_rate: float = 0.05
    failure_prob: float = 0.0015
    failure_min: int = 12
    failure_max: int = 48
    hide_frac: float = 0.15
    recon_weight: float = 0.1

    def __post_init__(self):
        if min(self.lr, self.batch_size, self.max_epochs, self.patience) <= 0:
            raise ValueError("lr, batch_size, max_epochs, patience must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")


class EarlyStopper:
    """Minimum-tracking with parameter snapshots."""

    def __init__(self, module: torch.nn.Module, patience: int):
        self.module = module
        self.patience = patience
        self.best = float("inf")
        self.bad_epochs = 0
        self.best_state = copy.deepcopy(module.state_dict())

    def step(self, value: float) -> bool:
        """Record one validation value; returns True when training should stop."""
        if value < self.best:
            self.best = value
            self.bad_epochs = 0
            self.best_state = copy.deepcopy(self.module.state_dict())
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience

    def restore(self):
        self.module.load_state_dict(self.best_state)


def _mask_kwargs(cfg: TrainConfig) -> dict:
    return {
        "rate": cfg.mask_rate,
        "point_rate": cfg.block_point_rate,
        "failure_prob": cfg.failure_prob,
        "run_min": cfg.failure_min,
        "run_max": cfg.failure_max,
    }


def _sample_masks(ds: Dataset, idx, cfg: TrainConfig, rng) -> np.ndarray:
    length, channels = ds.window_length, ds.n_channels
    masks = np.stack(
        [
            generate_mask(cfg.mask_protocol, length, channels, rng, **_mask_kwargs(cfg))
            for _ in idx
        ]
    )
    return masks * ds.native_mask[idx]


def _check_finite(loss: torch.Tensor, what: str, epoch: int, batch: int):
    if not torch.isfinite(loss):
        raise NumericError(
            f"{what} loss became non-finite at epoch {epoch}, batch {batch}; "
            "lower the learning rate or inspect the data"
        )


def train_denoiser(
    train: Dataset,
    val: Dataset,
    model: torch.nn.Module,
    sched: NoiseSchedule,
    cfg: TrainConfig,
):
    """Noise-prediction training. Returns (model, history).

    Per batch: a uniform step index and a Gaussian noise draw per window, the
    closed-form forward jump to that step, and a fresh conditioning mask from
    the evaluation protocol; the loss is the mean squared noise-prediction
    error over natively present cells.
    """
    rng = np.random.default_rng(cfg.seed)
    torch.manual_seed(cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)

    x_train = torch.from_numpy(train.windows.astype(np.float32))
    native_train = torch.from_numpy(train.native_mask.astype(np.float32))
    sqrt_ab = torch.from_numpy(np.sqrt(sched.alpha_bars).astype(np.float32))
    sqrt_1m = torch.from_numpy(np.sqrt(1.0 - sched.alpha_bars).astype(np.float32))
    n_steps = sched.num_steps
    n = train.n_windows

    # Frozen validation pack: one (t, noise, mask) triple per window.
    val_rng = np.random.default_rng(cfg.seed + 1)
    x_val = torch.from_numpy(val.windows.astype(np.float32))
    native_val = torch.from_numpy(val.native_mask.astype(np.float32))
    val_t = torch.from_numpy(val_rng.integers(1, n_steps + 1, size=val.n_windows))
    val_eps = torch.from_numpy(
        val_rng.standard_normal(val.windows.shape).astype(np.float32)
    )
    val_masks = torch.from_numpy(
        _sample_masks(val, np.arange(val.n_windows), cfg, val_rng).astype(np.float32)
    )

    def batch_loss(x0, native, t_idx, eps, cond_mask):
        coef_a = sqrt_ab[t_idx - 1][:, None, None]
        coef_b = sqrt_1m[t_idx - 1][:, None, None]
        x_t = coef_a * x0 + coef_b * eps
        pred = model(x_t, t_idx, x0 * cond_mask, cond_mask)
        diff = (eps - pred) * native
        return (diff * diff).sum() / native.sum().clamp(min=1.0)

    stopper = EarlyStopper(model, cfg.patience)
    history = []
    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        order = rng.permutation(n)
        train_losses = []
        for b, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = order[lo : lo + cfg.batch_size]
            cond = torch.from_numpy(
                _sample_masks(train, idx, cfg, rng).astype(np.float32)
            )
            t_idx = torch.from_numpy(rng.integers(1, n_steps + 1, size=len(idx)))
            eps = torch.from_numpy(
                rng.standard_normal((len(idx),) + train.windows.shape[1:]).astype(
                    np.float32
                )
            )
            loss = batch_loss(x_train[idx], native_train[idx], t_idx, eps, cond)
            _check_finite(loss, "denoiser", epoch, b)
            opt.zero_grad()
            loss.backward()
            opt.step()
            train_losses.append(float(loss.detach()))

        model.eval()
        with torch.no_grad():
            val_loss = float(
                batch_loss(x_val, native_val, val_t, val_eps, val_masks)
            )
        _check_finite(torch.tensor(val_loss), "denoiser validation", epoch, -1)
        history.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(train_losses)),
                "val_loss": val_loss,
            }
        )
        if stopper.step(val_loss):
            break
    stopper.restore()
    model.eval()
    return model, history


def pretrain_ar(train: Dataset, val: Dataset, model: torch.nn.Module, cfg: TrainConfig):
    """Self-supervised predictor pretraining. Returns (model, history).

    A random fraction of the observed cells is hidden from the input; the
    loss is the squared error on the hidden cells plus a down-weighted
    reconstruction term on the cells the model could see.
    """
    rng = np.random.default_rng(cfg.seed)
    torch.manual_seed(cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)

    x_train = torch.from_numpy(train.windows.astype(np.float32))
    native_train = train.native_mask
    n = train.n_windows

    def split_hidden(native, gen):
        hide = (gen.random(native.shape) < cfg.hide_frac) * native
        visible = native * (1.0 - hide)
        return hide, visible

    val_rng = np.random.default_rng(cfg.seed + 1)
    x_val = torch.from_numpy(val.windows.astype(np.float32))
    val_hide_np, val_vis_np = split_hidden(val.native_mask, val_rng)
    val_hide = torch.from_numpy(val_hide_np.astype(np.float32))
    val_vis = torch.from_numpy(val_vis_np.astype(np.float32))

    def pack_loss(x0, hide, visible):
        pred = model(x0 * visible, visible)
        return masked_mse(pred, x0, hide) + cfg.recon_weight * masked_mse(
            pred, x0, visible
        )

    stopper = EarlyStopper(model, cfg.patience)
    history = []
    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        order = rng.permutation(n)
        train_losses = []
        for b, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = order[lo : lo + cfg.batch_size]
            hide_np, vis_np = split_hidden(native_train[idx], rng)
            loss = pack_loss(
                x_train[idx],
                torch.from_numpy(hide_np.astype(np.float32)),
                torch.from_numpy(vis_np.astype(np.float32)),
            )
            _check_finite(loss, "predictor", epoch, b)
            opt.zero_grad()
            loss.backward()
            opt.step()
            train_losses.append(float(loss.detach()))

        model.eval()
        with torch.no_grad():
            val_loss = float(pack_loss(x_val, val_hide, val_vis))
        _check_finite(torch.tensor(val_loss), "predictor validation", epoch, -1)
        history.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(train_losses)),
                "val_loss": val_loss,
            }
        )
        if stopper.step(val_loss):
            break
    stopper.restore()
    model.eval()
    return model, history


def write_history_csv(path, history) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "val_loss"])
        writer.writeheader()
        writer.writerows(history)
