"""Vector primitives: pooling, normalization, cosine similarity.

Inputs may be any float precision; similarity math always runs in float64 so
that argmax/argmin selections tie-break identically across platforms. Cosine
values are clamped to [-1, 1] after computation because floating-point
overshoot (e.g. 1 + 4e-16 for near-parallel vectors) would otherwise break
downstream range checks.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError


def _as_vector(v, name: str = "embedding") -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise DataError(f"{name} must be a non-empty 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    return arr


def mean_pool(hidden) -> np.ndarray:
    """Average a (length x dim) hidden-state matrix over the length axis."""
    arr = np.asarray(hidden, dtype=np.float64)
    if arr.ndim != 2:
        raise DataError(f"hidden-state matrix must be 2-d, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DataError("empty sequence")
    if not np.all(np.isfinite(arr)):
        raise DataError("hidden-state matrix contains non-finite values")
    return arr.mean(axis=0)


def normalize(v) -> np.ndarray:
    """Scale a vector to unit Euclidean norm."""
    arr = _as_vector(v)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise DataError("zero-norm embedding")
    return arr / norm


def cosine(a, b) -> float:
    """Cosine similarity of two vectors, clamped to [-1, 1]."""
    va = _as_vector(a, "first vector")
    vb = _as_vector(b, "second vector")
    if va.shape != vb.shape:
        raise DataError(f"dimension mismatch: {va.shape[0]} vs {vb.shape[0]}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise DataError("zero-norm embedding")
    return float(np.clip(np.dot(va, vb) / (na * nb), -1.0, 1.0))


def pairwise_similarity(embeddings) -> np.ndarray:
    """K x K cosine-similarity matrix for K >= 2 vectors.

    The result is exactly symmetric with a unit diagonal; off-diagonal
    entries are clamped to [-1, 1].
    """
    rows = [_as_vector(v, f"embedding {i}") for i, v in enumerate(embeddings)]
    if len(rows) < 2:
        raise DataError(f"need at least 2 embeddings, got {len(rows)}")
    dims = {r.shape[0] for r in rows}
    if len(dims) > 1:
        raise DataError(f"dimension mismatch across embeddings: {sorted(dims)}")
    mat = np.stack(rows)
    norms = np.linalg.norm(mat, axis=1)
    if np.any(norms == 0.0):
        raise DataError("zero-norm embedding")
    unit = mat / norms[:, None]
    sim = unit @ unit.T
    sim = (sim + sim.T) / 2.0
    np.clip(sim, -1.0, 1.0, out=sim)
    np.fill_diagonal(sim, 1.0)
    return sim
