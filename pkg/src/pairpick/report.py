"""Render figures from the CSV artifacts the pipeline commands emit.

The pipeline itself only writes delimited text; this module is the plotting
consumer. Figures are written as PNG with fixed metadata so identical inputs
produce byte-identical files.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .drift import STABILITY_THRESHOLD
from .errors import DataError
from .simulator import read_experiment_csv
from .trainer import read_history_csv

_SAVEFIG = dict(dpi=150, metadata={"Software": "pairpick"})

STRATEGY_ORDER = ("hard", "random", "centroid", "easy", "presorted")


def _ordered(strategies) -> list[str]:
    known = [s for s in STRATEGY_ORDER if s in strategies]
    return known + sorted(set(strategies) - set(known))


def render_experiment_figure(experiment_csv, out_dir) -> Path:
    """2x2 panel of margins, loss, flip rate, and similarity by strategy."""
    runs, _ = read_experiment_csv(experiment_csv)
    if not runs:
        raise DataError(f"{experiment_csv}: no per-seed rows")
    strategies = _ordered({r["strategy"] for r in runs})
    metrics = ("margins", "loss", "flip_rate", "mean_similarity")
    titles = ("Test margins", "Test loss", "Label flip rate", "Mean pair similarity")

    fig, axes = plt.subplots(2, 2, figsize=(9, 7))
    for ax, metric, title in zip(axes.flat, metrics, titles):
        means, stds = [], []
        for s in strategies:
            vals = np.array([float(r[metric]) for r in runs if r["strategy"] == s])
            means.append(vals.mean())
            stds.append(vals.std())
        ax.bar(strategies, means, yerr=stds, capsize=4, color="#4878cf")
        ax.set_title(title)
        ax.grid(axis="y", alpha=0.3)
    fig.suptitle("Selection-strategy comparison (mean over seeds, std error bars)")
    fig.tight_layout()
    out = Path(out_dir) / "experiment_metrics.png"
    fig.savefig(out, **_SAVEFIG)
    plt.close(fig)
    return out


def render_history_figure(history_csv, out_dir) -> Path:
    """Training loss and gradient norm against the optimizer step."""
    steps, _ = read_history_csv(history_csv)
    if not steps:
        raise DataError(f"{history_csv}: no step records")
    xs = [s.step for s in steps]
    fig, (ax_loss, ax_grad) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax_loss.plot(xs, [s.loss for s in steps], color="#4878cf")
    ax_loss.axhline(np.log(2), color="gray", linestyle="--", linewidth=1, label="ln 2")
    ax_loss.set_xlabel("step")
    ax_loss.set_ylabel("batch loss")
    ax_loss.legend()
    ax_grad.plot(xs, [s.grad_norm for s in steps], color="#d65f5f")
    ax_grad.set_xlabel("step")
    ax_grad.set_ylabel("gradient norm")
    fig.suptitle("Training history")
    fig.tight_layout()
    out = Path(out_dir) / "train_history.png"
    fig.savefig(out, **_SAVEFIG)
    plt.close(fig)
    return out


def render_drift_figure(deltas_csv, out_dir) -> Path:
    """Histogram of per-pair similarity deltas with the advisory threshold."""
    with open(deltas_csv, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DataError(f"{deltas_csv}: no delta rows")
    deltas = [float(r["abs_delta"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(deltas, bins=30, color="#4878cf")
    ax.axvline(
        STABILITY_THRESHOLD, color="#d65f5f", linestyle="--",
        label=f"advisory threshold {STABILITY_THRESHOLD}",
    )
    ax.set_xlabel("|cosine delta| per pair")
    ax.set_ylabel("pairs")
    ax.legend()
    fig.tight_layout()
    out = Path(out_dir) / "drift_deltas.png"
    fig.savefig(out, **_SAVEFIG)
    plt.close(fig)
    return out


def write_experiment_summary(experiment_csv, out_dir) -> Path:
    """Echo the aggregate block into a standalone summary CSV."""
    _, aggregates = read_experiment_csv(experiment_csv)
    if not aggregates:
        raise DataError(f"{experiment_csv}: no aggregate rows")
    out = Path(out_dir) / "summary.csv"
    fields = ["strategy", "seed", "flip_rate", "mean_similarity", "margins", "loss", "agreement"]
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in aggregates:
            writer.writerow({k: row[k] for k in fields})
    return out


def render_all(
    out_dir,
    experiment_csv=None,
    history_csv=None,
    drift_deltas_csv=None,
) -> list[Path]:
    """Render every figure for which an input CSV was provided."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if experiment_csv is not None:
        written.append(render_experiment_figure(experiment_csv, out_dir))
        written.append(write_experiment_summary(experiment_csv, out_dir))
    if history_csv is not None:
        written.append(render_history_figure(history_csv, out_dir))
    if drift_deltas_csv is not None:
        written.append(render_drift_figure(drift_deltas_csv, out_dir))
    if not written:
        raise DataError("nothing to report: no input CSVs given")
    return written
