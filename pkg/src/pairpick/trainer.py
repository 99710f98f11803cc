"""Desk-scale DPO: a linear policy over response embeddings.

The policy scores a response y as theta . y. Over a fixed candidate set the
policy's normalizer is shared by the chosen and rejected response, so it
cancels in every evaluated quantity (loss and margins are functions of score
differences only); the score therefore stands in for the per-response
policy/reference log ratio, and theta = 0 is exactly the reference policy.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .corpus import EmbeddingStore, LabeledPair, write_embeddings, load_embeddings
from .errors import DataError, NumericError
from .preference import (
    MetricsReport,
    REWARD_CANONICALIZATION,
    dpo_loss_from_diffs,
    eval_margins,
    sigmoid,
    softplus,
)
from .seeding import substream

POLICY_PROMPT_ID = "policy"
POLICY_RESPONSE_ID = "theta"


@dataclass
class LinearPreferencePolicy:
    theta: np.ndarray
    beta: float

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.ndim != 1 or self.theta.size < 1:
            raise DataError(f"theta must be a non-empty vector, got shape {self.theta.shape}")
        if not np.all(np.isfinite(self.theta)):
            raise DataError("theta contains non-finite values")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")

    @property
    def dimension(self) -> int:
        return self.theta.shape[0]


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 1
    batch_size: int = 64
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate cannot be negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")


@dataclass
class StepRecord:
    step: int
    loss: float
    grad_norm: float


@dataclass
class TrainHistory:
    steps: list[StepRecord] = field(default_factory=list)
    final: Optional[MetricsReport] = None


def init_policy(dimension: int, beta: float) -> LinearPreferencePolicy:
    """Zero-weight policy: identical to the reference (loss ln 2, margins 0)."""
    if dimension < 1:
        raise ValueError(f"dimension must be >= 1, got {dimension}")
    return LinearPreferencePolicy(theta=np.zeros(int(dimension)), beta=beta)


def policy_log_ratio(policy: LinearPreferencePolicy, y) -> float:
    """Score of one response: theta . y, the per-response log ratio."""
    arr = np.asarray(y, dtype=np.float64)
    if arr.shape != policy.theta.shape:
        raise DataError(
            f"dimension mismatch: policy has {policy.dimension}, embedding has {arr.shape}"
        )
    return float(policy.theta @ arr)


def pair_deltas(labeled: Sequence[LabeledPair], store: EmbeddingStore) -> np.ndarray:
    """(n, D) matrix of chosen-minus-rejected embedding differences."""
    if len(labeled) == 0:
        raise DataError("empty labeled set")
    rows = [
        store.get(p.prompt_id, p.chosen_id) - store.get(p.prompt_id, p.rejected_id)
        for p in labeled
    ]
    return np.stack(rows)


def _batch_loss_and_grad(theta: np.ndarray, deltas: np.ndarray, beta: float):
    diffs = deltas @ theta
    loss = float(np.mean(softplus(-beta * diffs)))
    weights = -beta * sigmoid(-beta * diffs)
    grad = (weights[:, None] * deltas).mean(axis=0)
    return loss, grad


def train(
    policy: LinearPreferencePolicy,
    labeled: Sequence[LabeledPair],
    store: EmbeddingStore,
    cfg: TrainConfig,
    eval_pairs: Optional[Sequence[LabeledPair]] = None,
) -> tuple[LinearPreferencePolicy, TrainHistory]:
    """Mini-batch gradient descent on the DPO loss.

    Deterministic given cfg.seed: shuffling draws from a named substream per
    epoch. Each step records the batch loss at the pre-update weights and the
    gradient norm. The final report is computed on ``eval_pairs`` when given,
    otherwise on the training pairs.
    """
    deltas = pair_deltas(labeled, store)
    if deltas.shape[1] != policy.dimension:
        raise DataError(
            f"dimension mismatch: policy has {policy.dimension}, store has {deltas.shape[1]}"
        )
    theta = policy.theta.copy()
    history = TrainHistory()
    step = 0
    n = deltas.shape[0]
    for epoch in range(cfg.epochs):
        order = np.arange(n)
        if cfg.shuffle:
            substream(cfg.seed, "shuffle", epoch).shuffle(order)
        for start in range(0, n, cfg.batch_size):
            batch = deltas[order[start : start + cfg.batch_size]]
            # overflow here IS the divergence we detect; suppress the warning
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grad = _batch_loss_and_grad(theta, batch, policy.beta)
                updated = theta - cfg.learning_rate * grad
            if not (np.isfinite(loss) and np.all(np.isfinite(updated))):
                raise NumericError(
                    f"training diverged at step {step + 1} (loss={loss}); "
                    f"lower the learning rate"
                )
            step += 1
            history.steps.append(StepRecord(step=step, loss=loss, grad_norm=float(np.linalg.norm(grad))))
            theta = updated
    trained = LinearPreferencePolicy(theta=theta, beta=policy.beta)
    history.final = evaluate(trained, eval_pairs if eval_pairs is not None else labeled, store)
    return trained, history


def gradient_check(policy: LinearPreferencePolicy, deltas, epsilon: float = 1e-5) -> float:
    """Max relative error of the analytic gradient vs central differences."""
    deltas = np.asarray(deltas, dtype=np.float64)
    if deltas.ndim != 2 or deltas.shape[0] == 0:
        raise DataError("gradient check needs a non-empty (n, D) delta matrix")
    theta = policy.theta
    _, analytic = _batch_loss_and_grad(theta, deltas, policy.beta)
    worst = 0.0
    for d in range(theta.shape[0]):
        bump = np.zeros_like(theta)
        bump[d] = epsilon
        up = dpo_loss_from_diffs(deltas @ (theta + bump), policy.beta)
        down = dpo_loss_from_diffs(deltas @ (theta - bump), policy.beta)
        numeric = (up - down) / (2.0 * epsilon)
        scale = max(abs(analytic[d]), abs(numeric), 1e-8)
        worst = max(worst, abs(analytic[d] - numeric) / scale)
    return worst


def evaluate(
    policy: LinearPreferencePolicy,
    test: Sequence[LabeledPair],
    store: EmbeddingStore,
) -> MetricsReport:
    """Margins, loss, and sign agreement of the policy on labeled pairs."""
    diffs = pair_deltas(test, store) @ policy.theta
    agreement = float(np.mean(diffs > 0) + 0.5 * np.mean(diffs == 0))
    return MetricsReport(
        margins=float(np.mean(diffs)),
        loss=dpo_loss_from_diffs(diffs, policy.beta),
        n_pairs=len(test),
        agreement=agreement,
    )


def log_ratios_for(
    policy: LinearPreferencePolicy,
    test: Sequence[LabeledPair],
    store: EmbeddingStore,
):
    """Per-pair PolicyLogRatios under the policy (for metric-level access)."""
    from .preference import PolicyLogRatios

    return [
        PolicyLogRatios(
            policy_log_ratio(policy, store.get(p.prompt_id, p.chosen_id)),
            policy_log_ratio(policy, store.get(p.prompt_id, p.rejected_id)),
        )
        for p in test
    ]


def save_policy(policy: LinearPreferencePolicy, path) -> None:
    """Persist as a one-record embeddings file with beta in the header."""
    store = EmbeddingStore(policy.dimension, meta={"beta": policy.beta})
    store.add(POLICY_PROMPT_ID, POLICY_RESPONSE_ID, policy.theta)
    write_embeddings(store, path, binary=False)


def load_policy(path) -> LinearPreferencePolicy:
    store = load_embeddings(path)
    if "beta" not in store.meta:
        raise DataError(f"{path}: policy file lacks beta in its header")
    theta = store.get(POLICY_PROMPT_ID, POLICY_RESPONSE_ID)
    return LinearPreferencePolicy(theta=theta, beta=float(store.meta["beta"]))


def write_history_csv(history: TrainHistory, path) -> None:
    """step,loss,grad_norm rows plus a footer row with the final report."""
    with open(path, "w", encoding="utf-8", newline="") as out:
        writer = csv.writer(out)
        writer.writerow(["step", "loss", "grad_norm"])
        for rec in history.steps:
            writer.writerow([rec.step, repr(rec.loss), repr(rec.grad_norm)])
        if history.final is not None:
            m = history.final
            writer.writerow([])
            writer.writerow(["# " + REWARD_CANONICALIZATION])
            writer.writerow(["final_margins", "final_loss", "final_agreement", "n_pairs"])
            writer.writerow([repr(m.margins), repr(m.loss), repr(m.agreement), m.n_pairs])


def read_history_csv(path) -> tuple[list[StepRecord], Optional[dict]]:
    """Parse a history CSV back into step records and the optional footer."""
    steps: list[StepRecord] = []
    final: Optional[dict] = None
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows or rows[0] != ["step", "loss", "grad_norm"]:
        raise DataError(f"{path}: not a training-history CSV")
    i = 1
    while i < len(rows) and rows[i][0] != "final_margins":
        step, loss, grad_norm = rows[i][:3]
        steps.append(StepRecord(step=int(step), loss=float(loss), grad_norm=float(grad_norm)))
        i += 1
    if i < len(rows) - 1:
        header, values = rows[i], rows[i + 1]
        final = dict(zip(header, values))
    return steps, final
