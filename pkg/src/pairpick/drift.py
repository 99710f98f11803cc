"""Check that pair similarities are stable between two embedding snapshots.

If the per-pair cosine deltas between checkpoints stay small, pairs selected
once before training remain the pairs any later checkpoint would select, so
selection can run offline. The 0.05 mean-delta threshold below is advisory
only: it annotates reports and never fails a run.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .corpus import CandidatePair, EmbeddingStore
from .errors import DataError
from .vectors import cosine

STABILITY_THRESHOLD = 0.05


@dataclass
class DriftReport:
    n_pairs: int
    max_abs_delta: float
    mean_abs_delta: float
    deltas: Optional[list[float]] = None

    @property
    def selection_stable(self) -> bool:
        return self.mean_abs_delta < STABILITY_THRESHOLD


def similarity_drift(
    store_a: EmbeddingStore,
    store_b: EmbeddingStore,
    pairs: Sequence[CandidatePair],
    keep_deltas: bool = True,
) -> DriftReport:
    """Per-pair |cos_a - cos_b| aggregated over a pair list.

    The stores may have different dimensions (distinct checkpoints); each
    cosine is computed within its own store. Every pair must resolve in both.
    """
    if len(pairs) == 0:
        raise DataError("empty pair list")
    deltas = []
    for p in pairs:
        sim_a = cosine(store_a.get(p.prompt_id, p.left_id), store_a.get(p.prompt_id, p.right_id))
        sim_b = cosine(store_b.get(p.prompt_id, p.left_id), store_b.get(p.prompt_id, p.right_id))
        deltas.append(abs(sim_a - sim_b))
    arr = np.array(deltas)
    return DriftReport(
        n_pairs=len(deltas),
        max_abs_delta=float(arr.max()),
        mean_abs_delta=float(arr.mean()),
        deltas=deltas if keep_deltas else None,
    )


def write_drift_csv(report: DriftReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as out:
        writer = csv.writer(out)
        writer.writerow(["n_pairs", "max_abs_delta", "mean_abs_delta", "selection_stable"])
        writer.writerow(
            [
                report.n_pairs,
                repr(report.max_abs_delta),
                repr(report.mean_abs_delta),
                report.selection_stable,
            ]
        )


def write_drift_deltas_csv(report: DriftReport, pairs: Sequence[CandidatePair], path) -> None:
    """Per-pair delta file for plotting; requires deltas to have been kept."""
    if report.deltas is None or len(report.deltas) != len(pairs):
        raise DataError("drift report carries no per-pair deltas")
    with open(path, "w", encoding="utf-8", newline="") as out:
        writer = csv.writer(out)
        writer.writerow(["prompt_id", "left_id", "right_id", "abs_delta"])
        for pair, delta in zip(pairs, report.deltas):
            writer.writerow([pair.prompt_id, pair.left_id, pair.right_id, repr(delta)])
