"""Per-prompt pair selection strategies and sort-and-split for pre-paired data.

Each strategy picks exactly one response pair per prompt group:

* hard      -- the most similar pair (argmax cosine), ambiguous to annotate
* easy      -- the most dissimilar pair (argmin cosine)
* centroid  -- one response nearest each center of a 2-means split
* random    -- uniform over the K-choose-2 pairs, seeded
* presorted -- the sole pair of an already-paired (K=2) group

Ties everywhere break toward the lexicographically smallest canonical pair
key, so every strategy is a pure function of (group, store, seed). Ties are
detected within an absolute tolerance of 1e-12: mathematically equal values
(duplicate responses, the two members of a 2-point cluster, which are always
equidistant from their midpoint center) reach us as values differing by an
ulp or two, and a strict comparison would let that noise pick the winner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .corpus import CandidatePair, EmbeddingStore, PromptGroup
from .errors import DataError, DegenerateClusterError
from .seeding import substream
from .vectors import normalize, pairwise_similarity

TIE_EPS = 1e-12


@dataclass
class ClusterSplit:
    """2-means result: cluster label (1 or 2) per key plus the two centers."""

    assignments: dict
    centers: np.ndarray


@dataclass
class SortSplitResult:
    hard_half: list[CandidatePair]
    easy_half: list[CandidatePair]
    split_fraction: float


def _group_vectors(group: PromptGroup, store: EmbeddingStore) -> tuple[list[str], np.ndarray]:
    """Response ids in canonical (sorted) order with their stacked vectors."""
    ids = sorted(group.response_ids)
    vectors = np.stack([store.get(group.prompt_id, rid) for rid in ids])
    return ids, vectors


def _extreme_pair(group: PromptGroup, store: EmbeddingStore, want_max: bool) -> CandidatePair:
    ids, vectors = _group_vectors(group, store)
    sim = pairwise_similarity(vectors)
    candidates = [(j, k) for j in range(len(ids)) for k in range(j + 1, len(ids))]
    values = [sim[j, k] for j, k in candidates]
    extreme = max(values) if want_max else min(values)
    # first candidate within tolerance wins: the scan is in canonical order
    j, k = next(
        pair for pair, value in zip(candidates, values) if abs(value - extreme) <= TIE_EPS
    )
    return CandidatePair(
        prompt_id=group.prompt_id,
        left_id=ids[j],
        right_id=ids[k],
        similarity=float(sim[j, k]),
        strategy="hard" if want_max else "easy",
    )


def select_hard(group: PromptGroup, store: EmbeddingStore) -> CandidatePair:
    """The most similar response pair of the group."""
    return _extreme_pair(group, store, want_max=True)


def select_easy(group: PromptGroup, store: EmbeddingStore) -> CandidatePair:
    """The most dissimilar response pair of the group."""
    return _extreme_pair(group, store, want_max=False)


def kmeans2(points, max_iters: int = 100, tol: float = 1e-6, keys: Optional[Sequence] = None) -> ClusterSplit:
    """Deterministic 2-means via Lloyd's iterations on Euclidean distance.

    Initialization is the two endpoints of the most dissimilar pair. If an
    iteration empties a cluster, the point farthest from the surviving center
    is reassigned to it. All-identical inputs raise DegenerateClusterError.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise DataError(f"2-means needs at least 2 points, got shape {pts.shape}")
    n = pts.shape[0]
    if keys is None:
        keys = list(range(n))
    elif len(keys) != n:
        raise DataError("keys length does not match the number of points")

    sq_dist = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    index_pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    far_d = max(sq_dist[i, j] for i, j in index_pairs)
    if far_d == 0.0:
        raise DegenerateClusterError("degenerate: single cluster")
    far_i, far_j = next(
        (i, j) for i, j in index_pairs if abs(sq_dist[i, j] - far_d) <= TIE_EPS
    )

    centers = np.stack([pts[far_i], pts[far_j]])
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(max_iters):
        d = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = np.argmin(d, axis=1)  # ties go to cluster index 0
        new_centers = centers.copy()
        for c in (0, 1):
            members = assign == c
            if members.any():
                new_centers[c] = pts[members].mean(axis=0)
        for c in (0, 1):
            if not (assign == c).any():
                other = 1 - c
                farthest = int(np.argmax(((pts - new_centers[other]) ** 2).sum(axis=1)))
                assign[farthest] = c
                new_centers[c] = pts[farthest]
                new_centers[other] = pts[assign == other].mean(axis=0)
        movement = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        centers = new_centers
        if movement < tol:
            break

    assignments = {keys[i]: int(assign[i]) + 1 for i in range(n)}
    return ClusterSplit(assignments=assignments, centers=centers)


def select_centroid(group: PromptGroup, store: EmbeddingStore) -> CandidatePair:
    """One response nearest each center of a 2-means split of the group.

    Embeddings are normalized before clustering, making Euclidean 2-means
    equivalent to cosine clustering. Degenerate groups (all responses
    identical) fall back to the easy pair, still tagged "centroid".
    """
    ids, vectors = _group_vectors(group, store)
    unit = np.stack([normalize(v) for v in vectors])
    try:
        split = kmeans2(unit, keys=ids)
    except DegenerateClusterError:
        fallback = select_easy(group, store)
        fallback.strategy = "centroid"
        return fallback

    representatives = []
    for cluster in (1, 2):
        members = [(i, rid) for i, rid in enumerate(ids) if split.assignments[rid] == cluster]
        distances = [float(((unit[i] - split.centers[cluster - 1]) ** 2).sum()) for i, _ in members]
        nearest = min(distances)
        # ids are sorted, so the first member within tolerance is canonical
        representatives.append(
            next(rid for (_, rid), d in zip(members, distances) if abs(d - nearest) <= TIE_EPS)
        )

    left, right = sorted(representatives)
    sim = pairwise_similarity(vectors)
    return CandidatePair(
        prompt_id=group.prompt_id,
        left_id=left,
        right_id=right,
        similarity=float(sim[ids.index(left), ids.index(right)]),
        strategy="centroid",
    )


def select_random(group: PromptGroup, store: EmbeddingStore, seed: int) -> CandidatePair:
    """Uniform draw over the K-choose-2 pairs from a per-prompt substream."""
    ids, vectors = _group_vectors(group, store)
    sim = pairwise_similarity(vectors)
    pairs = [(j, k) for j in range(len(ids)) for k in range(j + 1, len(ids))]
    rng = substream(seed, "selection", group.prompt_id)
    j, k = pairs[int(rng.integers(len(pairs)))]
    return CandidatePair(
        prompt_id=group.prompt_id,
        left_id=ids[j],
        right_id=ids[k],
        similarity=float(sim[j, k]),
        strategy="random",
    )


def select_presorted(group: PromptGroup, store: EmbeddingStore) -> CandidatePair:
    """The sole pair of a pre-paired (K=2) group, similarity attached."""
    if len(group.responses) != 2:
        raise DataError(
            f"presorted selection requires exactly 2 responses, "
            f"prompt {group.prompt_id!r} has {len(group.responses)}"
        )
    ids, vectors = _group_vectors(group, store)
    sim = pairwise_similarity(vectors)
    return CandidatePair(
        prompt_id=group.prompt_id,
        left_id=ids[0],
        right_id=ids[1],
        similarity=float(sim[0, 1]),
        strategy="presorted",
    )


SELECTORS = {
    "hard": select_hard,
    "easy": select_easy,
    "centroid": select_centroid,
    "presorted": select_presorted,
}


def select_pair(group: PromptGroup, store: EmbeddingStore, strategy: str, seed: int = 0) -> CandidatePair:
    """Dispatch to one strategy; `seed` only matters for random."""
    if strategy == "random":
        return select_random(group, store, seed)
    try:
        return SELECTORS[strategy](group, store)
    except KeyError:
        raise DataError(f"unknown strategy {strategy!r}") from None


def sort_split(pairs: Sequence[CandidatePair], fraction: float = 0.5) -> SortSplitResult:
    """Sort pairs by similarity descending and split at ceil(fraction * N).

    The first (most similar) block is the hard half, the remainder the easy
    half. Ties sort by canonical pair key so the split is deterministic.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"split fraction must be in (0, 1), got {fraction}")
    if len(pairs) == 0:
        raise DataError("cannot sort-split an empty pair list")
    ordered = sorted(pairs, key=lambda p: (-p.similarity, p.key))
    n_hard = math.ceil(fraction * len(ordered) - 1e-9)
    n_hard = max(1, n_hard)
    return SortSplitResult(
        hard_half=ordered[:n_hard],
        easy_half=ordered[n_hard:],
        split_fraction=fraction,
    )
