"""Missingness-pattern generators and mask application.

Masks are (L, D) float arrays of exactly 0.0 and 1.0; 1 marks an observed
cell, 0 a missing one. All generators take an explicit numpy Generator so
identical seeds yield identical masks bitwise.
"""

from __future__ import annotations

import csv

import numpy as np

from .errors import DataError

_MAX_RETRIES = 10


def point_mask(
    length: int, channels: int, rate: float, rng: np.random.Generator
) -> np.ndarray:
    """Independent per-cell dropout with the given missing probability.

    A draw that leaves no observed cell is resampled; after a bounded number
    of retries a DataError is raised.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"rate must lie in [0, 1), got {rate}")
    for _ in range(_MAX_RETRIES):
        mask = (rng.random((length, channels)) >= rate).astype(np.float64)
        if mask.any():
            return mask
    raise DataError("point_mask produced an all-missing mask repeatedly")


def block_mask(
    length: int,
    channels: int,
    rng: np.random.Generator,
    point_rate: float = 0.05,
    failure_prob: float = 0.0015,
    run_min: int = 12,
    run_max: int = 48,
) -> np.ndarray:
    """Point dropout plus simulated per-channel sensor failures.

    Each (time, channel) cell independently starts a failure with probability
    ``failure_prob``; the failure erases a contiguous run of
    S ~ DiscreteUniform[run_min, run_max] steps in that channel, truncated at
    the window end. Draw order: point field, then failure-start field, then
    run lengths in row-major order of the starts.
    """
    if not 0.0 <= point_rate < 1.0:
        raise ValueError(f"point_rate must lie in [0, 1), got {point_rate}")
    if not 0.0 <= failure_prob <= 1.0:
        raise ValueError(f"failure_prob must lie in [0, 1], got {failure_prob}")
    if not 1 <= run_min <= run_max:
        raise ValueError(f"require 1 <= run_min <= run_max, got ({run_min}, {run_max})")
    for _ in range(_MAX_RETRIES):
        mask = (rng.random((length, channels)) >= point_rate).astype(np.float64)
        starts = np.argwhere(rng.random((length, channels)) < failure_prob)
        if len(starts):
            runs = rng.integers(run_min, run_max + 1, size=len(starts))
            for (t, d), run in zip(starts, runs):
                mask[t : t + run, d] = 0.0
        if mask.any():
            return mask
    raise DataError("block_mask produced an all-missing mask repeatedly")


def hybrid_mask(
    length: int,
    channels: int,
    rng: np.random.Generator,
    point_rate: float = 0.1,
    block_point_rate: float = 0.05,
    failure_prob: float = 0.0015,
    run_min: int = 12,
    run_max: int = 48,
) -> np.ndarray:
    """Fair-coin delegation between the point and block strategies.

    The coin is the first draw from ``rng``; the chosen generator then
    continues on the same stream.
    """
    if rng.random() < 0.5:
        return point_mask(length, channels, point_rate, rng)
    return block_mask(
        length,
        channels,
        rng,
        point_rate=block_point_rate,
        failure_prob=failure_prob,
        run_min=run_min,
        run_max=run_max,
    )


def generate_mask(
    protocol: str, length: int, channels: int, rng: np.random.Generator, **kw
) -> np.ndarray:
    """Dispatch by protocol name: "point", "block", or "hybrid"."""
    if protocol == "point":
        return point_mask(length, channels, kw.get("rate", 0.1), rng)
    if protocol == "block":
        return block_mask(
            length,
            channels,
            rng,
            point_rate=kw.get("point_rate", 0.05),
            failure_prob=kw.get("failure_prob", 0.0015),
            run_min=kw.get("run_min", 12),
            run_max=kw.get("run_max", 48),
        )
    if protocol == "hybrid":
        return hybrid_mask(
            length,
            channels,
            rng,
            point_rate=kw.get("rate", 0.1),
            block_point_rate=kw.get("point_rate", 0.05),
            failure_prob=kw.get("failure_prob", 0.0015),
            run_min=kw.get("run_min", 12),
            run_max=kw.get("run_max", 48),
        )
    raise ValueError(f"unknown masking protocol {protocol!r}")


def apply_mask(x: np.ndarray, mask: np.ndarray):
    """Zero out missing cells: returns (x * mask, mask)."""
    x = np.asarray(x)
    mask = np.asarray(mask)
    if x.shape != mask.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {mask.shape}")
    return x * mask, mask


def save_mask_csv(path, mask: np.ndarray, channel_names=None) -> None:
    """Write a mask as a 0/1 CSV with one header row."""
    mask = np.asarray(mask)
    if channel_names is None:
        channel_names = [f"c{i}" for i in range(mask.shape[1])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(channel_names)
        for row in mask:
            writer.writerow(int(v) for v in row)


def load_mask_csv(path) -> np.ndarray:
    """Read a 0/1 CSV written by save_mask_csv (header row required)."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read mask {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty mask file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: ragged row")
            try:
                values = [float(v) for v in row]
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric mask cell") from None
            if any(v not in (0.0, 1.0) for v in values):
                raise DataError(f"{path}:{lineno}: mask cells must be 0 or 1")
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: mask file has no data rows")
    return np.asarray(rows, dtype=np.float64)
