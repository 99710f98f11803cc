"""Synthetic world with oracle rewards and a noisy Bradley-Terry annotator.

Each prompt gets a unit anchor vector; its K responses are the anchor plus a
dispersion-scaled gaussian perturbation, renormalized. The perturbation
covariance has a power-law eigenvalue spectrum (exponent COVARIANCE_DECAY,
random orientation per prompt, eigenvalues scaled to mean 1): an isotropic
perturbation makes within-group pair distances concentrate so tightly at the
default dimension that selection strategies barely differ, while the decaying
spectrum spreads them the way real embedding sets do.

Rewards are exactly linear in the embedding, R(y) = reward_scale * (w . y)
with a unit w, so |R(y) - R(y')| <= reward_scale * ||y - y'||: similar
responses have close rewards, which is what makes similar pairs hard to
label correctly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .corpus import (
    CandidatePair,
    EmbeddingStore,
    LabeledPair,
    PromptGroup,
    ResponseRecord,
)
from .errors import DataError
from .preference import MetricsReport, RewardPair, REWARD_CANONICALIZATION, bt_probability
from .seeding import derive_seed, substream
from .selection import select_pair
from .trainer import TrainConfig, evaluate, init_policy, train

COVARIANCE_DECAY = 2.5

DEFAULT_STRATEGIES = ("hard", "random", "centroid", "easy")
DEFAULT_N_SEEDS = 10


@dataclass
class WorldConfig:
    n_prompts: int = 2000
    k_responses: int = 4
    dimension: int = 32
    reward_scale: float = 4.0
    response_dispersion: float = 0.35
    annotator_temperature: float = 1.0
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.n_prompts < 1:
            raise ValueError("n_prompts must be positive")
        if self.k_responses < 2:
            raise ValueError("k_responses must be >= 2")
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if not self.reward_scale > 0:
            raise ValueError("reward_scale must be positive")
        if not 0.0 < self.response_dispersion <= 1.0:
            raise ValueError("response_dispersion must be in (0, 1]")
        if not self.annotator_temperature > 0:
            raise ValueError("annotator_temperature must be positive")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must be in (0, 1)")


@dataclass
class SyntheticWorld:
    config: WorldConfig
    store: EmbeddingStore
    groups: list[PromptGroup]
    true_weight: np.ndarray
    true_reward: dict[tuple[str, str], float]

    def reward(self, prompt_id: str, response_id: str) -> float:
        try:
            return self.true_reward[(prompt_id, response_id)]
        except KeyError:
            raise DataError(f"unknown response ({prompt_id!r}, {response_id!r})") from None


def generate_world(cfg: WorldConfig) -> SyntheticWorld:
    """Build a deterministic synthetic world from the config seed."""
    rng = substream(cfg.seed, "world")
    n, k, dim = cfg.n_prompts, cfg.k_responses, cfg.dimension

    w = rng.standard_normal(dim)
    w /= np.linalg.norm(w)

    anchors = rng.standard_normal((n, dim))
    anchors /= np.linalg.norm(anchors, axis=1, keepdims=True)

    spectrum = np.arange(1, dim + 1, dtype=np.float64) ** (-COVARIANCE_DECAY)
    spectrum *= dim / spectrum.sum()
    basis, _ = np.linalg.qr(rng.standard_normal((n, dim, dim)))
    raw = rng.standard_normal((n, dim, k))
    perturbations = cfg.response_dispersion * np.einsum(
        "nde,e,nek->nkd", basis, np.sqrt(spectrum), raw
    )

    responses = anchors[:, None, :] + perturbations
    responses /= np.linalg.norm(responses, axis=2, keepdims=True)
    rewards = cfg.reward_scale * (responses @ w)

    pad = len(str(n - 1))
    store = EmbeddingStore(dim)
    groups: list[PromptGroup] = []
    reward_map: dict[tuple[str, str], float] = {}
    for i in range(n):
        pid = f"p{i:0{pad}d}"
        records = []
        for j in range(k):
            rid = f"r{j:02d}"
            store.add(pid, rid, responses[i, j])
            reward_map[(pid, rid)] = float(rewards[i, j])
            records.append(ResponseRecord(response_id=rid))
        groups.append(PromptGroup(prompt_id=pid, responses=records))
    return SyntheticWorld(
        config=cfg, store=store, groups=groups, true_weight=w, true_reward=reward_map
    )


def annotate(pair: CandidatePair, world: SyntheticWorld, temperature: float, seed: int) -> LabeledPair:
    """Noisy label: left wins with probability sigmoid((R_left - R_right) / T)."""
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    r_left = world.reward(pair.prompt_id, pair.left_id)
    r_right = world.reward(pair.prompt_id, pair.right_id)
    p_left = bt_probability(RewardPair(r_left / temperature, r_right / temperature))
    rng = substream(seed, "annotation", pair.prompt_id, pair.left_id, pair.right_id)
    if rng.random() < p_left:
        chosen, rejected = pair.left_id, pair.right_id
    else:
        chosen, rejected = pair.right_id, pair.left_id
    return LabeledPair(
        prompt_id=pair.prompt_id, chosen_id=chosen, rejected_id=rejected, annotator="simulated"
    )


def oracle_label(pair: CandidatePair, world: SyntheticWorld) -> LabeledPair:
    """Noiseless label by true reward; exact ties keep the canonical order."""
    r_left = world.reward(pair.prompt_id, pair.left_id)
    r_right = world.reward(pair.prompt_id, pair.right_id)
    if r_left >= r_right:
        chosen, rejected = pair.left_id, pair.right_id
    else:
        chosen, rejected = pair.right_id, pair.left_id
    return LabeledPair(
        prompt_id=pair.prompt_id, chosen_id=chosen, rejected_id=rejected, annotator="oracle"
    )


def flip_rate(labeled: Sequence[LabeledPair], world: SyntheticWorld) -> float:
    """Fraction of labels whose chosen response has strictly lower true reward.

    Exact-tie pairs are excluded from the denominator.
    """
    if len(labeled) == 0:
        raise DataError("empty labeled set")
    flips = comparable = 0
    for p in labeled:
        r_chosen = world.reward(p.prompt_id, p.chosen_id)
        r_rejected = world.reward(p.prompt_id, p.rejected_id)
        if r_chosen == r_rejected:
            continue
        comparable += 1
        if r_chosen < r_rejected:
            flips += 1
    return flips / comparable if comparable else 0.0


@dataclass
class Replicate:
    """One world plus its shared train/test split and oracle test labels."""

    index: int
    seed: int
    world: SyntheticWorld
    train_groups: list[PromptGroup]
    test_pairs: list[LabeledPair]


@dataclass
class StrategyRunResult:
    strategy: str
    replicate: int
    flip_rate: float
    mean_similarity: float
    metrics: MetricsReport


@dataclass
class ExperimentReport:
    config: WorldConfig
    strategies: tuple[str, ...]
    n_seeds: int
    beta: float
    rows: list[StrategyRunResult] = field(default_factory=list)

    def values(self, strategy: str, metric: str) -> np.ndarray:
        picked = [r for r in self.rows if r.strategy == strategy]
        if metric in ("flip_rate", "mean_similarity"):
            return np.array([getattr(r, metric) for r in picked])
        return np.array([getattr(r.metrics, metric) for r in picked])

    def aggregate(self) -> list[dict]:
        out = []
        for strategy in self.strategies:
            for stat, fn in (("mean", np.mean), ("std", np.std)):
                out.append(
                    {
                        "strategy": strategy,
                        "seed": stat,
                        "flip_rate": float(fn(self.values(strategy, "flip_rate"))),
                        "mean_similarity": float(fn(self.values(strategy, "mean_similarity"))),
                        "margins": float(fn(self.values(strategy, "margins"))),
                        "loss": float(fn(self.values(strategy, "loss"))),
                        "agreement": float(fn(self.values(strategy, "agreement"))),
                    }
                )
        return out


def replicate_seed(base_seed: int, index: int) -> int:
    return derive_seed(base_seed, "replicate", index)


def build_replicate(cfg: WorldConfig, index: int) -> Replicate:
    """World plus shared split and oracle-labeled test pairs for one seed."""
    seed = replicate_seed(cfg.seed, index)
    world = generate_world(replace(cfg, seed=seed))
    n_train = math.ceil(cfg.n_prompts * (1.0 - cfg.test_fraction))
    if n_train >= cfg.n_prompts:
        raise DataError(
            f"test split is empty ({cfg.n_prompts} prompts, test_fraction "
            f"{cfg.test_fraction}); raise n_prompts or test_fraction"
        )
    train_groups = world.groups[:n_train]
    test_seed = derive_seed(seed, "test-pairs")
    test_pairs = [
        oracle_label(select_pair(g, world.store, "random", test_seed), world)
        for g in world.groups[n_train:]
    ]
    return Replicate(
        index=index, seed=seed, world=world, train_groups=train_groups, test_pairs=test_pairs
    )


def run_strategy(
    replicate: Replicate,
    strategy: str,
    train_cfg: TrainConfig,
    beta: float = 0.1,
    fraction: float = 1.0,
) -> StrategyRunResult:
    """Select, annotate, train, and evaluate one strategy on one replicate.

    ``fraction`` trains on the leading ceil(fraction * N) labeled pairs, for
    sample-efficiency comparisons.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    world = replicate.world
    cfg = world.config
    selection_seed = derive_seed(replicate.seed, "selection")
    annotation_seed = derive_seed(replicate.seed, "annotation")
    selected = [
        select_pair(g, world.store, strategy, selection_seed) for g in replicate.train_groups
    ]
    n_used = max(1, math.ceil(fraction * len(selected) - 1e-9))
    selected = selected[:n_used]
    labeled = [annotate(p, world, cfg.annotator_temperature, annotation_seed) for p in selected]

    policy = init_policy(cfg.dimension, beta)
    run_train_cfg = replace(train_cfg, seed=derive_seed(replicate.seed, "train", strategy))
    trained, _ = train(policy, labeled, world.store, run_train_cfg, eval_pairs=replicate.test_pairs)
    metrics = evaluate(trained, replicate.test_pairs, world.store)
    return StrategyRunResult(
        strategy=strategy,
        replicate=replicate.index,
        flip_rate=flip_rate(labeled, world),
        mean_similarity=float(np.mean([p.similarity for p in selected])),
        metrics=metrics,
    )


def run_experiment(
    cfg: WorldConfig,
    strategies: Sequence[str] = DEFAULT_STRATEGIES,
    train_cfg: Optional[TrainConfig] = None,
    n_seeds: int = DEFAULT_N_SEEDS,
    beta: float = 0.1,
) -> ExperimentReport:
    """Independent replicates of select -> annotate -> train -> evaluate."""
    if n_seeds < 1:
        raise ValueError("n_seeds must be positive")
    if not strategies:
        raise ValueError("at least one strategy is required")
    train_cfg = train_cfg or TrainConfig()
    report = ExperimentReport(
        config=cfg, strategies=tuple(strategies), n_seeds=n_seeds, beta=beta
    )
    for index in range(n_seeds):
        replicate = build_replicate(cfg, index)
        for strategy in strategies:
            report.rows.append(run_strategy(replicate, strategy, train_cfg, beta=beta))
    return report


def write_experiment_csv(report: ExperimentReport, path) -> None:
    """Per-run rows followed by an aggregate block of mean/std rows."""
    with open(path, "w", encoding="utf-8", newline="") as out:
        out.write(f"# {REWARD_CANONICALIZATION}; beta={report.beta!r}\n")
        writer = csv.writer(out)
        header = ["strategy", "seed", "flip_rate", "mean_similarity", "margins", "loss", "agreement"]
        writer.writerow(header)
        for r in report.rows:
            writer.writerow(
                [
                    r.strategy,
                    r.replicate,
                    repr(r.flip_rate),
                    repr(r.mean_similarity),
                    repr(r.metrics.margins),
                    repr(r.metrics.loss),
                    repr(r.metrics.agreement),
                ]
            )
        for agg in report.aggregate():
            writer.writerow([agg["strategy"], agg["seed"]] + [repr(agg[k]) for k in header[2:]])


def read_experiment_csv(path):
    """Rows (list of dicts) split into per-seed runs and aggregate entries."""
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    if not rows:
        raise DataError(f"{path}: empty experiment report")
    runs = [r for r in rows if r["seed"] not in ("mean", "std")]
    aggregates = [r for r in rows if r["seed"] in ("mean", "std")]
    return runs, aggregates
