"""pairpick: low-ambiguity preference-pair selection over response embeddings.

The library selects one response pair per prompt by embedding-similarity
strategies (hard / easy / centroid / random), sort-splits pre-paired data,
and verifies the selection's effect on alignment quality with a synthetic
Bradley-Terry annotator plus a linear-policy DPO trainer.
"""

from .corpus import (
    CandidatePair,
    EmbeddingStore,
    LabeledPair,
    PromptGroup,
    ResponseRecord,
    filter_group,
    load_embeddings,
    load_labeled,
    load_pairs,
    load_response_groups,
    write_embeddings,
    write_labeled,
    write_pairs,
    write_response_groups,
)
from .drift import DriftReport, similarity_drift
from .errors import DataError, DegenerateClusterError, NumericError, PairpickError
from .preference import (
    MetricsReport,
    PolicyLogRatios,
    RewardPair,
    bt_probability,
    dpo_grad_wrt_diff,
    dpo_loss,
    eval_loss,
    eval_margins,
    implicit_reward,
)
from .selection import (
    ClusterSplit,
    SortSplitResult,
    kmeans2,
    select_centroid,
    select_easy,
    select_hard,
    select_pair,
    select_presorted,
    select_random,
    sort_split,
)
from .simulator import (
    SyntheticWorld,
    WorldConfig,
    annotate,
    flip_rate,
    generate_world,
    oracle_label,
    run_experiment,
)
from .trainer import (
    LinearPreferencePolicy,
    TrainConfig,
    TrainHistory,
    evaluate,
    gradient_check,
    init_policy,
    policy_log_ratio,
    train,
)
from .vectors import cosine, mean_pool, normalize, pairwise_similarity

__version__ = "0.1.0"
