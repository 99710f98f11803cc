"""Data model and file formats for prompt groups, embeddings, and pairs.

All record files are line-delimited JSON (one object per line, UTF-8) except
the binary embedding format, which starts with the magic bytes ``REALEMB1``
followed by a little-endian u32 dimension and packed float32 records.
``load_embeddings`` detects the format from the leading bytes.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

from .errors import DataError

STRATEGIES = ("hard", "easy", "centroid", "random", "presorted")
ANNOTATORS = ("ingested", "simulated", "oracle")

BINARY_MAGIC = b"REALEMB1"

DEFAULT_MAX_TOKEN_LENGTH = 512
DEFAULT_MIN_SCORE_RATIO = 1.5


@dataclass
class ResponseRecord:
    response_id: str
    text: Optional[str] = None
    score: Optional[float] = None
    token_length: Optional[int] = None


@dataclass
class PromptGroup:
    prompt_id: str
    prompt_text: Optional[str] = None
    responses: list[ResponseRecord] = field(default_factory=list)

    def __post_init__(self):
        if not self.prompt_id:
            raise DataError("prompt group requires a prompt_id")
        if len(self.responses) < 2:
            raise DataError(
                f"prompt group {self.prompt_id!r} needs at least 2 responses, "
                f"got {len(self.responses)}"
            )
        ids = [r.response_id for r in self.responses]
        if len(set(ids)) != len(ids):
            raise DataError(f"prompt group {self.prompt_id!r} has duplicate response ids")

    @property
    def response_ids(self) -> list[str]:
        return [r.response_id for r in self.responses]


@dataclass
class CandidatePair:
    """An unlabeled selected pair in canonical order (left_id < right_id)."""

    prompt_id: str
    left_id: str
    right_id: str
    similarity: float
    strategy: str

    def __post_init__(self):
        if self.left_id == self.right_id:
            raise DataError(f"pair for {self.prompt_id!r} repeats response {self.left_id!r}")
        if self.left_id > self.right_id:
            raise DataError(
                f"non-canonical pair ({self.left_id!r}, {self.right_id!r}) "
                f"for prompt {self.prompt_id!r}"
            )
        if self.strategy not in STRATEGIES:
            raise DataError(f"unknown strategy {self.strategy!r}")
        if not math.isfinite(self.similarity):
            raise DataError(f"non-finite similarity for prompt {self.prompt_id!r}")

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.prompt_id, self.left_id, self.right_id)


@dataclass
class LabeledPair:
    prompt_id: str
    chosen_id: str
    rejected_id: str
    annotator: str

    def __post_init__(self):
        if self.chosen_id == self.rejected_id:
            raise DataError(
                f"labeled pair for {self.prompt_id!r} repeats response {self.chosen_id!r}"
            )
        if self.annotator not in ANNOTATORS:
            raise DataError(f"unknown annotator {self.annotator!r}")


class EmbeddingStore:
    """Map from (prompt_id, response_id) to a fixed-dimension vector."""

    def __init__(self, dimension: int, meta: Optional[dict] = None):
        if int(dimension) < 1:
            raise DataError(f"embedding dimension must be >= 1, got {dimension}")
        self.dimension = int(dimension)
        self.meta: dict = dict(meta or {})
        self._vectors: dict[tuple[str, str], np.ndarray] = {}

    def add(self, prompt_id: str, response_id: str, values) -> None:
        key = (prompt_id, response_id)
        if key in self._vectors:
            raise DataError(f"duplicate key ({prompt_id!r}, {response_id!r})")
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 1 or arr.shape[0] != self.dimension:
            raise DataError(
                f"dimension mismatch for ({prompt_id!r}, {response_id!r}): "
                f"expected {self.dimension}, got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise DataError(f"non-finite value for ({prompt_id!r}, {response_id!r})")
        self._vectors[key] = arr

    def get(self, prompt_id: str, response_id: str) -> np.ndarray:
        try:
            return self._vectors[(prompt_id, response_id)]
        except KeyError:
            raise DataError(f"missing embedding for ({prompt_id!r}, {response_id!r})") from None

    def __contains__(self, key: tuple[str, str]) -> bool:
        return key in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def keys(self) -> Iterator[tuple[str, str]]:
        return iter(self._vectors)

    def has_group(self, group: PromptGroup) -> bool:
        return all((group.prompt_id, rid) in self for rid in group.response_ids)


def read_json_lines(path) -> Iterator[tuple[int, dict]]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise DataError(f"{path}:{lineno}: expected an object, got {type(obj).__name__}")
        yield lineno, obj


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise DataError(f"{where}: missing {key!r}")
    return obj[key]


def load_response_groups(path) -> list[PromptGroup]:
    """Read a groups file; malformed lines are reported with line numbers."""
    groups = []
    for lineno, obj in read_json_lines(path):
        where = f"{path}:{lineno}"
        prompt_id = _require(obj, "prompt_id", where)
        if not isinstance(prompt_id, str) or not prompt_id:
            raise DataError(f"{where}: prompt_id must be a non-empty string")
        raw = _require(obj, "responses", where)
        if not isinstance(raw, list):
            raise DataError(f"{where}: responses must be a list")
        responses = []
        for r in raw:
            if not isinstance(r, dict):
                raise DataError(f"{where}: each response must be an object")
            rid = _require(r, "response_id", where)
            score = r.get("score")
            if score is not None and (not isinstance(score, (int, float)) or score < 0):
                raise DataError(f"{where}: score must be a non-negative number")
            tok = r.get("token_length")
            if tok is not None and (not isinstance(tok, int) or tok < 1):
                raise DataError(f"{where}: token_length must be a positive integer")
            responses.append(
                ResponseRecord(
                    response_id=rid,
                    text=r.get("text"),
                    score=None if score is None else float(score),
                    token_length=tok,
                )
            )
        try:
            groups.append(
                PromptGroup(prompt_id=prompt_id, prompt_text=obj.get("prompt"), responses=responses)
            )
        except DataError as exc:
            raise DataError(f"{where}: {exc}") from None
    return groups


def write_response_groups(groups: Iterable[PromptGroup], path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as out:
        for g in groups:
            rec: dict = {"prompt_id": g.prompt_id}
            if g.prompt_text is not None:
                rec["prompt"] = g.prompt_text
            rec["responses"] = []
            for r in g.responses:
                rr: dict = {"response_id": r.response_id}
                if r.text is not None:
                    rr["text"] = r.text
                if r.score is not None:
                    rr["score"] = r.score
                if r.token_length is not None:
                    rr["token_length"] = r.token_length
                rec["responses"].append(rr)
            out.write(json.dumps(rec, ensure_ascii=False) + "\n")
            count += 1
    return count


def _load_embeddings_text(path) -> EmbeddingStore:
    lines = read_json_lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise DataError(f"{path}: empty embeddings file (missing header)") from None
    dim = _require(header, "dim", f"{path}:{lineno}")
    if not isinstance(dim, int) or dim < 1:
        raise DataError(f"{path}:{lineno}: dim must be a positive integer")
    meta = {k: v for k, v in header.items() if k != "dim"}
    store = EmbeddingStore(dim, meta=meta)
    for lineno, obj in lines:
        where = f"{path}:{lineno}"
        pid = _require(obj, "prompt_id", where)
        rid = _require(obj, "response_id", where)
        values = _require(obj, "values", where)
        if not isinstance(values, list) or len(values) != dim:
            raise DataError(
                f"{where}: dimension mismatch: expected {dim} values, "
                f"got {len(values) if isinstance(values, list) else type(values).__name__}"
            )
        try:
            store.add(pid, rid, values)
        except DataError as exc:
            raise DataError(f"{where}: {exc}") from None
    return store


def _load_embeddings_binary(path) -> EmbeddingStore:
    data = Path(path).read_bytes()
    if len(data) < len(BINARY_MAGIC) + 4:
        raise DataError(f"{path}: truncated binary embeddings file")
    if data[: len(BINARY_MAGIC)] != BINARY_MAGIC:
        raise DataError(f"{path}: bad magic bytes")
    (dim,) = struct.unpack_from("<I", data, len(BINARY_MAGIC))
    store = EmbeddingStore(dim)
    offset = len(BINARY_MAGIC) + 4
    record_bytes = 4 * dim
    n = 0
    while offset < len(data):
        if offset + 2 > len(data):
            raise DataError(f"{path}: truncated record header at byte {offset}")
        (klen,) = struct.unpack_from("<H", data, offset)
        offset += 2
        if offset + klen + record_bytes > len(data):
            raise DataError(f"{path}: truncated record {n} at byte {offset}")
        key = data[offset : offset + klen]
        offset += klen
        sep = key.find(b"\x00")
        if sep < 0:
            raise DataError(f"{path}: record {n} key lacks the NUL separator")
        pid = key[:sep].decode("utf-8")
        rid = key[sep + 1 :].decode("utf-8")
        values = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
        offset += record_bytes
        store.add(pid, rid, values.astype(np.float64))
        n += 1
    return store


def load_embeddings(path) -> EmbeddingStore:
    """Read an embeddings file in either the text or binary form."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(len(BINARY_MAGIC))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if head == BINARY_MAGIC:
        return _load_embeddings_binary(path)
    return _load_embeddings_text(path)


def write_embeddings(store: EmbeddingStore, path, binary: bool = False) -> int:
    """Write a store; the text form carries ``store.meta`` in the header."""
    if binary:
        with open(path, "wb") as out:
            out.write(BINARY_MAGIC)
            out.write(struct.pack("<I", store.dimension))
            count = 0
            for (pid, rid) in store.keys():
                if "\x00" in pid or "\x00" in rid:
                    raise DataError(f"binary keys cannot contain NUL: ({pid!r}, {rid!r})")
                key = pid.encode("utf-8") + b"\x00" + rid.encode("utf-8")
                if len(key) > 0xFFFF:
                    raise DataError(f"key too long for binary format: ({pid!r}, {rid!r})")
                out.write(struct.pack("<H", len(key)))
                out.write(key)
                out.write(store.get(pid, rid).astype("<f4").tobytes())
                count += 1
        return count
    with open(path, "w", encoding="utf-8") as out:
        header = {"dim": store.dimension, **store.meta}
        out.write(json.dumps(header, ensure_ascii=False) + "\n")
        count = 0
        for (pid, rid) in store.keys():
            rec = {"prompt_id": pid, "response_id": rid, "values": store.get(pid, rid).tolist()}
            out.write(json.dumps(rec, ensure_ascii=False) + "\n")
            count += 1
    return count


def load_pairs(path) -> list[CandidatePair]:
    pairs = []
    for lineno, obj in read_json_lines(path):
        where = f"{path}:{lineno}"
        try:
            pairs.append(
                CandidatePair(
                    prompt_id=_require(obj, "prompt_id", where),
                    left_id=_require(obj, "left_id", where),
                    right_id=_require(obj, "right_id", where),
                    similarity=float(_require(obj, "similarity", where)),
                    strategy=_require(obj, "strategy", where),
                )
            )
        except DataError as exc:
            raise DataError(f"{where}: {exc}") from None
    return pairs


def write_pairs(pairs: Iterable[CandidatePair], path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as out:
        for p in pairs:
            if p.left_id >= p.right_id:
                raise DataError(
                    f"non-canonical pair ({p.left_id!r}, {p.right_id!r}) "
                    f"for prompt {p.prompt_id!r}"
                )
            rec = {
                "prompt_id": p.prompt_id,
                "left_id": p.left_id,
                "right_id": p.right_id,
                "similarity": p.similarity,
                "strategy": p.strategy,
            }
            out.write(json.dumps(rec, ensure_ascii=False) + "\n")
            count += 1
    return count


def load_labeled(path) -> list[LabeledPair]:
    pairs = []
    for lineno, obj in read_json_lines(path):
        where = f"{path}:{lineno}"
        try:
            pairs.append(
                LabeledPair(
                    prompt_id=_require(obj, "prompt_id", where),
                    chosen_id=_require(obj, "chosen_id", where),
                    rejected_id=_require(obj, "rejected_id", where),
                    annotator=_require(obj, "annotator", where),
                )
            )
        except DataError as exc:
            raise DataError(f"{where}: {exc}") from None
    return pairs


def write_labeled(pairs: Iterable[LabeledPair], path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as out:
        for p in pairs:
            rec = {
                "prompt_id": p.prompt_id,
                "chosen_id": p.chosen_id,
                "rejected_id": p.rejected_id,
                "annotator": p.annotator,
            }
            out.write(json.dumps(rec, ensure_ascii=False) + "\n")
            count += 1
    return count


def effective_token_length(record: ResponseRecord) -> Optional[int]:
    """Declared token length, or a whitespace-token approximation from text."""
    if record.token_length is not None:
        return record.token_length
    if record.text is not None:
        return len(record.text.split())
    return None


def filter_group(
    group: PromptGroup,
    max_token_length: Optional[int] = DEFAULT_MAX_TOKEN_LENGTH,
    min_score_ratio: Optional[float] = DEFAULT_MIN_SCORE_RATIO,
) -> Optional[PromptGroup]:
    """Apply length and score-ratio cleaning filters.

    Responses longer than ``max_token_length`` are dropped (responses with no
    measurable length pass). The group is rejected (returns None) when fewer
    than 2 responses survive, or when the ratio of the two highest surviving
    scores falls below ``min_score_ratio``. Either filter can be disabled by
    passing None. Filtering is idempotent.
    """
    survivors = group.responses
    if max_token_length is not None:
        survivors = [
            r
            for r in survivors
            if (length := effective_token_length(r)) is None or length <= max_token_length
        ]
    if len(survivors) < 2:
        return None
    if min_score_ratio is not None:
        missing = [r.response_id for r in survivors if r.score is None]
        if missing:
            raise DataError(
                f"score-ratio filter requires scores; prompt {group.prompt_id!r} "
                f"lacks scores for {missing}"
            )
        top, second = sorted((r.score for r in survivors), reverse=True)[:2]
        if second > 0:
            ratio = top / second
        else:
            ratio = math.inf if top > 0 else 1.0
        if ratio < min_score_ratio:
            return None
    if survivors is group.responses:
        return group
    return replace(group, responses=survivors)
