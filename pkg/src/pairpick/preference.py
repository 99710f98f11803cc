"""Bradley-Terry preference probability, DPO loss, and evaluation metrics.

Per-response rewards are canonicalized as raw policy/reference log ratios;
beta scales rewards inside the losses only, never inside the margins metric,
so margins stay comparable across beta settings. All log-sigmoid evaluation
goes through the softplus form log(1 + exp(-z)), which is exact for large
|z| where the naive form would overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DataError

REWARD_CANONICALIZATION = "reward=log_ratio; beta applied in loss only"


@dataclass
class RewardPair:
    """Estimated rewards of the chosen and rejected response."""

    r_plus: float
    r_minus: float

    def __post_init__(self):
        if not (math.isfinite(self.r_plus) and math.isfinite(self.r_minus)):
            raise DataError("rewards must be finite")


@dataclass
class PolicyLogRatios:
    """Per-pair log(policy/reference) for the chosen and rejected response."""

    log_ratio_plus: float
    log_ratio_minus: float

    def __post_init__(self):
        if not (math.isfinite(self.log_ratio_plus) and math.isfinite(self.log_ratio_minus)):
            raise DataError("log ratios must be finite")

    @property
    def diff(self) -> float:
        return self.log_ratio_plus - self.log_ratio_minus


@dataclass
class MetricsReport:
    margins: float
    loss: float
    n_pairs: int
    agreement: Optional[float] = None

    def __post_init__(self):
        if self.n_pairs < 1:
            raise DataError("metrics require at least one pair")
        if self.loss < 0:
            raise DataError("loss cannot be negative")


def sigmoid(z):
    """Numerically stable logistic function, elementwise."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def softplus(z):
    """log(1 + exp(z)) without overflow; equals -log(sigmoid(-z))."""
    z = np.asarray(z, dtype=np.float64)
    out = np.logaddexp(0.0, z)
    return out if out.ndim else float(out)


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return beta


def bt_probability(rewards: RewardPair) -> float:
    """P(chosen preferred) = sigmoid(r_plus - r_minus)."""
    return float(sigmoid(rewards.r_plus - rewards.r_minus))


def implicit_reward(log_ratios: PolicyLogRatios, beta: float) -> RewardPair:
    """Scale log ratios by beta to recover the implicit reward pair."""
    beta = _check_beta(beta)
    return RewardPair(beta * log_ratios.log_ratio_plus, beta * log_ratios.log_ratio_minus)


def _diffs(batch: Sequence[PolicyLogRatios]) -> np.ndarray:
    if len(batch) == 0:
        raise DataError("empty batch")
    return np.array([lr.diff for lr in batch], dtype=np.float64)


def dpo_loss_from_diffs(diffs: np.ndarray, beta: float) -> float:
    """Mean of -log sigmoid(beta * diff) over an array of score differences."""
    beta = _check_beta(beta)
    diffs = np.asarray(diffs, dtype=np.float64)
    if diffs.size == 0:
        raise DataError("empty batch")
    return float(np.mean(softplus(-beta * diffs)))


def dpo_loss(batch: Sequence[PolicyLogRatios], beta: float) -> float:
    """Mean -log sigmoid(beta * (log_ratio_plus - log_ratio_minus))."""
    return dpo_loss_from_diffs(_diffs(batch), beta)


def dpo_grad_wrt_diff(diff, beta: float):
    """d/d(diff) of -log sigmoid(beta * diff), i.e. -beta * sigmoid(-beta * diff)."""
    beta = _check_beta(beta)
    diff = np.asarray(diff, dtype=np.float64)
    out = np.asarray(-beta * sigmoid(-beta * diff))
    return out if out.ndim else float(out)


def eval_margins(test: Sequence[PolicyLogRatios]) -> float:
    """Mean reward difference over a test set; beta is deliberately not applied."""
    return float(np.mean(_diffs(test)))


def eval_loss(test: Sequence[PolicyLogRatios], beta: float) -> float:
    """DPO loss evaluated on a held-out set."""
    return dpo_loss(test, beta)
