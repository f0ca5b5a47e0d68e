"""Dataset ingestion, windowing, normalization, and the synthetic benchmark.

A dataset is a stack of fixed-length windows cut from one chronologically
ordered multivariate series. ``native_mask`` records which cells were present
in the source (1) versus empty (0); natively empty cells hold a 0.0
placeholder in ``windows`` and are excluded from statistics and metrics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class Dataset:
    windows: np.ndarray  # (n, L, D) float64
    native_mask: np.ndarray  # (n, L, D) float64, 1 = present in source
    channel_names: tuple

    def __post_init__(self):
        if self.windows.shape != self.native_mask.shape:
            raise ValueError("windows and native_mask shapes differ")
        if self.windows.ndim != 3:
            raise ValueError("windows must be (n, L, D)")
        if len(self.channel_names) != self.windows.shape[2]:
            raise ValueError("channel_names length must match channel count")

    @property
    def n_windows(self) -> int:
        return int(self.windows.shape[0])

    @property
    def window_length(self) -> int:
        return int(self.windows.shape[1])

    @property
    def n_channels(self) -> int:
        return int(self.windows.shape[2])


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel mean/std computed on training data over present cells."""

    mean: np.ndarray  # (D,)
    std: np.ndarray  # (D,)


def load_csv(path, window_length: int) -> Dataset:
    """Parse a CSV of one header row plus one row per time step.

    Empty cells mark natively missing values. Rows are chunked into
    consecutive non-overlapping windows; a trailing partial window is
    dropped.
    """
    if window_length < 1:
        raise ValueError(f"window_length must be >= 1, got {window_length}")
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        values, present = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(
                    f"{path}:{lineno}: ragged row ({len(row)} cells, "
                    f"expected {len(header)})"
                )
            vrow, prow = [], []
            for name, cell in zip(header, row):
                cell = cell.strip()
                if cell == "":
                    vrow.append(0.0)
                    prow.append(0.0)
                else:
                    try:
                        vrow.append(float(cell))
                    except ValueError:
                        raise DataError(
                            f"{path}:{lineno}: non-numeric cell {cell!r} "
                            f"in column {name!r}"
                        ) from None
                    prow.append(1.0)
            values.append(vrow)
            present.append(prow)
    if len(values) < window_length:
        raise DataError(
            f"{path}: {len(values)} rows, need at least {window_length}"
        )
    n = len(values) // window_length
    rows = n * window_length
    windows = np.asarray(values[:rows], dtype=np.float64).reshape(
        n, window_length, len(header)
    )
    native = np.asarray(present[:rows], dtype=np.float64).reshape(
        n, window_length, len(header)
    )
    if not np.isfinite(windows).all():
        raise DataError(f"{path}: non-finite value in data")
    return Dataset(windows=windows, native_mask=native, channel_names=tuple(header))


def save_csv(path, series: np.ndarray, channel_names, native_mask=None) -> None:
    """Write a (rows, D) series; cells with native_mask == 0 are left empty."""
    series = np.asarray(series)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(channel_names)
        for i, row in enumerate(series):
            if native_mask is None:
                writer.writerow(repr(float(v)) for v in row)
            else:
                writer.writerow(
                    repr(float(v)) if native_mask[i, j] else ""
                    for j, v in enumerate(row)
                )


def flatten_windows(windows: np.ndarray) -> np.ndarray:
    """(n, L, D) -> (n*L, D) chronological series."""
    n, length, ch = windows.shape
    return windows.reshape(n * length, ch)


def chrono_split(ds: Dataset, train_frac: float, val_frac: float):
    """Contiguous chronological partition into (train, val, test).

    Window counts are floored for train and val; the remainder goes to test.
    Empty partitions are an error.
    """
    if train_frac <= 0 or val_frac <= 0 or train_frac + val_frac >= 1:
        raise ValueError(
            f"fractions must be positive and sum below 1, got "
            f"({train_frac}, {val_frac})"
        )
    n = ds.n_windows
    n_train = int(np.floor(n * train_frac))
    n_val = int(np.floor(n * val_frac))
    n_test = n - n_train - n_val
    if n_train < 1 or n_val < 1 or n_test < 1:
        raise DataError(
            f"degenerate split of {n} windows: {n_train}/{n_val}/{n_test}"
        )

    def take(lo, hi):
        return replace(
            ds, windows=ds.windows[lo:hi], native_mask=ds.native_mask[lo:hi]
        )

    return take(0, n_train), take(n_train, n_train + n_val), take(n_train + n_val, n)


def compute_stats(ds: Dataset) -> ChannelStats:
    """Mean/std per channel over natively present cells only."""
    values = flatten_windows(ds.windows)
    present = flatten_windows(ds.native_mask)
    count = present.sum(axis=0)
    if np.any(count < 2):
        raise DataError("a channel has fewer than 2 observed cells")
    mean = (values * present).sum(axis=0) / count
    var = (((values - mean) ** 2) * present).sum(axis=0) / count
    std = np.sqrt(var)
    if np.any(std <= 0):
        bad = [ds.channel_names[i] for i in np.nonzero(std <= 0)[0]]
        raise DataError(f"constant channel(s) rejected: {bad}")
    return ChannelStats(mean=mean, std=std)


def normalize(ds: Dataset, stats: ChannelStats) -> Dataset:
    """Per-channel z-score; natively missing cells are re-zeroed afterwards
    so that the fill value equals the (training) channel mean."""
    w = (ds.windows - stats.mean) / stats.std
    w = w * ds.native_mask
    return replace(ds, windows=w)


def denormalize(x: np.ndarray, stats: ChannelStats) -> np.ndarray:
    """Inverse of normalize on any (..., D) array."""
    return np.asarray(x) * stats.std + stats.mean


def make_synthetic(
    n_windows: int,
    window_length: int,
    channels: int,
    rng: np.random.Generator,
    amplitude: float = 1.0,
    ar_coeff: float = 0.7,
    noise_std: float = 0.1,
    mix: bool = True,
) -> Dataset:
    """Sinusoid + AR(1) benchmark with cross-channel coupling.

    Each latent channel is an integer-period random-phase sinusoid plus an
    AR(1) noise track; observed channels are a linear mixture of the latents,
    so the data carries both temporal and cross-channel structure.
    """
    total = n_windows * window_length
    t = np.arange(total)

    periods = rng.integers(window_length // 2, 2 * window_length + 1, size=channels)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=channels)
    latent = amplitude * np.sin(
        2.0 * np.pi * t[:, None] / periods[None, :] + phases[None, :]
    )

    if noise_std > 0:
        innovations = rng.normal(0.0, noise_std, size=(total, channels))
        noise = np.empty_like(innovations)
        prev = np.zeros(channels)
        for i in range(total):
            prev = ar_coeff * prev + innovations[i]
            noise[i] = prev
        latent = latent + noise

    if mix and channels > 1:
        # dense mixing spreads every latent across all observed channels, so
        # a missing cell is strongly constrained by the other channels
        for _ in range(10):
            mixing = rng.standard_normal((channels, channels)) / np.sqrt(channels)
            if np.linalg.cond(mixing) <= 20.0:
                break
        else:
            raise DataError("could not draw a well-conditioned mixing matrix")
        latent = latent @ mixing.T

    windows = latent.reshape(n_windows, window_length, channels)
    return Dataset(
        windows=windows,
        native_mask=np.ones_like(windows),
        channel_names=tuple(f"c{i}" for i in range(channels)),
    )
