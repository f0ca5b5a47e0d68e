"""Imputation metrics and classical reference baselines.

Metrics are computed only on cells selected by the evaluation mask, which the
experiment harness restricts to cells that are natively present. Baselines
operate on normalized data, where 0 is the training channel mean.
"""

from __future__ import annotations

import numpy as np


def _selected(x_hat, x_true, eval_mask):
    x_hat = np.asarray(x_hat, dtype=np.float64)
    x_true = np.asarray(x_true, dtype=np.float64)
    eval_mask = np.asarray(eval_mask)
    if not (x_hat.shape == x_true.shape == eval_mask.shape):
        raise ValueError("metric inputs must share one shape")
    sel = eval_mask > 0
    if not sel.any():
        raise ValueError("evaluation mask selects no cells")
    return x_hat[sel], x_true[sel]


def mae(x_hat, x_true, eval_mask) -> float:
    a, b = _selected(x_hat, x_true, eval_mask)
    return float(np.mean(np.abs(a - b)))


def rmse(x_hat, x_true, eval_mask) -> float:
    a, b = _selected(x_hat, x_true, eval_mask)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def per_channel_metrics(x_hat, x_true, eval_mask):
    """(mae, rmse) lists per channel; None where a channel has no eval cells."""
    channels = np.asarray(x_true).shape[-1]
    maes, rmses = [], []
    for c in range(channels):
        m = np.asarray(eval_mask)[..., c]
        if not (m > 0).any():
            maes.append(None)
            rmses.append(None)
            continue
        maes.append(mae(x_hat[..., c], x_true[..., c], m))
        rmses.append(rmse(x_hat[..., c], x_true[..., c], m))
    return maes, rmses


def baseline_impute(x_known: np.ndarray, mask: np.ndarray, method: str) -> np.ndarray:
    """Fill one (L, D) window with a classical method.

    mean:   constant channel-mean fill (zero in normalized units)
    locf:   last observed value carried forward; channel mean before the
            first observation
    linear: per-channel linear interpolation between observed neighbors,
            edge-extended

    A fully missing channel falls back to the mean fill.
    """
    x_known = np.asarray(x_known, dtype=np.float64)
    mask = np.asarray(mask)
    if x_known.shape != mask.shape or x_known.ndim != 2:
        raise ValueError("baseline_impute expects matching (L, D) arrays")
    if method == "mean":
        return x_known * mask
    if method not in ("locf", "linear"):
        raise ValueError(f"unknown baseline {method!r}")

    length = x_known.shape[0]
    out = np.array(x_known * mask)
    for c in range(x_known.shape[1]):
        obs = np.nonzero(mask[:, c] > 0)[0]
        if obs.size == 0:
            out[:, c] = 0.0
            continue
        if method == "locf":
            filled = np.zeros(length)
            last = 0.0
            seen = False
            for t in range(length):
                if mask[t, c] > 0:
                    last = x_known[t, c]
                    seen = True
                filled[t] = last if seen else 0.0
            out[:, c] = filled
        else:
            out[:, c] = np.interp(np.arange(length), obs, x_known[obs, c])
    return out


def baseline_impute_windows(x_known: np.ndarray, mask: np.ndarray, method: str):
    """Apply baseline_impute across a (n, L, D) stack."""
    return np.stack(
        [baseline_impute(x_known[i], mask[i], method) for i in range(x_known.shape[0])]
    )
