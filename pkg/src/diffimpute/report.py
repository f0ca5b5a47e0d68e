"""Report writers: delimited rows, a JSON summary, and rendered figures.

Every evaluation run produces ``report.csv`` (one row per scored run) and
``summary.json`` (config echo plus detail that does not fit a flat row).
Unless figures are disabled, the matching figure for the run type is
rendered next to them as a PNG.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def write_report_csv(path, rows) -> None:
    fieldnames = []
    for row in rows:
        for key in row:
            if key not in fieldnames:
                fieldnames.append(key)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in fieldnames})


def write_summary_json(path, summary: dict) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _method_series(rows, x_key):
    by_method = {}
    for row in rows:
        by_method.setdefault(row["method"], []).append(
            (float(row[x_key]), float(row["mae"]), float(row["rmse"]))
        )
    for series in by_method.values():
        series.sort(key=lambda p: p[0])
    return by_method


def render_sweep_figure(path, rows, x_key: str, x_label: str, log_x=False) -> None:
    """MAE and RMSE against the swept value, one line per method."""
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.4), constrained_layout=True)
    for ax, (idx, name) in zip(axes, enumerate(["MAE", "RMSE"], start=1)):
        for method, series in sorted(_method_series(rows, x_key).items()):
            xs = [p[0] for p in series]
            ys = [p[idx] for p in series]
            ax.plot(xs, ys, marker="o", label=method)
        if log_x:
            ax.set_xscale("log")
        ax.set_xlabel(x_label)
        ax.set_ylabel(name)
        ax.grid(True, alpha=0.3)
    axes[-1].legend(fontsize=8)
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_bar_figure(path, rows, label_key: str, title: str) -> None:
    """MAE/RMSE bars per labeled run (ablation variants or baselines)."""
    labels = [str(r[label_key]) for r in rows]
    maes = [float(r["mae"]) for r in rows]
    rmses = [float(r["rmse"]) for r in rows]
    x = range(len(labels))
    width = 0.38
    fig, ax = plt.subplots(figsize=(1.6 + 1.2 * len(labels), 3.4), constrained_layout=True)
    ax.bar([i - width / 2 for i in x], maes, width, label="MAE")
    ax.bar([i + width / 2 for i in x], rmses, width, label="RMSE")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_title(title)
    ax.grid(True, axis="y", alpha=0.3)
    ax.legend(fontsize=8)
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_history_figure(path, history, title: str) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.2), constrained_layout=True)
    ax.plot([h["epoch"] for h in history], [h["train_loss"] for h in history], label="train")
    ax.plot([h["epoch"] for h in history], [h["val_loss"] for h in history], label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.savefig(path, dpi=150)
    plt.close(fig)


def emit(out_dir, rows, summary, figure_spec=None) -> dict:
    """Write report.csv + summary.json (+ figure); returns written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "report_csv": str(out / "report.csv"),
        "summary_json": str(out / "summary.json"),
    }
    write_report_csv(paths["report_csv"], rows)
    write_summary_json(paths["summary_json"], summary)
    if figure_spec is not None:
        kind = figure_spec["kind"]
        fig_path = out / figure_spec["filename"]
        if kind == "sweep":
            render_sweep_figure(
                fig_path,
                rows,
                figure_spec["x_key"],
                figure_spec["x_label"],
                log_x=figure_spec.get("log_x", False),
            )
        elif kind == "bars":
            render_bar_figure(fig_path, rows, figure_spec["label_key"], figure_spec["title"])
        else:
            raise ValueError(f"unknown figure kind {kind!r}")
        paths["figure"] = str(fig_path)
    return paths
