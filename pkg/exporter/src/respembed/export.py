"""Mean-pooled last-hidden-state embeddings of response texts.

Each response is tokenized ALONE, with no prompt and no chat template, so the
embedding depends only on the response string: that is what keeps similarity
rankings stable while a model is being finetuned, and it is the default here.
The --with-prompt escape hatch embeds the prompt and response joined as one
string instead; it exists for studying joint-string drift and is
experimental.

Pooling averages the final layer's hidden states over all non-padding
positions. Inference runs in float32 on CPU or the requested device with
gradients disabled, so a fixed model and input file always reproduce the
same vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .formats import (
    ResponseText,
    read_groups,
    write_embeddings_binary,
    write_embeddings_text,
)


@dataclass
class ExportJob:
    model: str
    groups_path: str
    out_path: str
    max_length: int = 512
    batch_size: int = 16
    binary: bool = False
    with_prompt: bool = False

    def __post_init__(self):
        if self.max_length < 1:
            raise ValueError("max_length must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


@dataclass
class ExportResult:
    count: int
    dimension: int
    truncated: list[str]
    log_path: str | None


def _load_model_and_tokenizer(model_id: str):
    from transformers import AutoModel, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(model_id)
        model = AutoModel.from_pretrained(model_id)
    except Exception as exc:
        raise RuntimeError(f"cannot load model {model_id!r}: {exc}") from exc
    if tokenizer.pad_token is None:
        tokenizer.pad_token = tokenizer.eos_token or tokenizer.unk_token
    if tokenizer.pad_token is None:
        raise RuntimeError(f"tokenizer for {model_id!r} has no usable padding token")
    model.eval()
    return model, tokenizer


def _input_text(record: ResponseText, with_prompt: bool) -> str:
    if with_prompt and record.prompt:
        return record.prompt + "\n\n" + record.text
    return record.text


@torch.inference_mode()
def _embed_batch(model, tokenizer, texts: list[str], max_length: int) -> np.ndarray:
    encoded = tokenizer(
        texts,
        return_tensors="pt",
        padding=True,
        truncation=True,
        max_length=max_length,
    )
    hidden = model(**encoded).last_hidden_state
    mask = encoded["attention_mask"].unsqueeze(-1).to(hidden.dtype)
    pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1)
    return pooled.to(torch.float32).cpu().numpy()


def export_embeddings(job: ExportJob) -> ExportResult:
    """Embed every response in the groups file and write one record each."""
    records = read_groups(job.groups_path)
    seen: set[tuple[str, str]] = set()
    for r in records:
        key = (r.prompt_id, r.response_id)
        if key in seen:
            raise ValueError(f"duplicate key ({r.prompt_id!r}, {r.response_id!r})")
        seen.add(key)

    model, tokenizer = _load_model_and_tokenizer(job.model)
    dimension = int(model.config.hidden_size)

    truncated: list[str] = []
    rows: list[tuple[str, str, np.ndarray]] = []
    for start in range(0, len(records), job.batch_size):
        batch = records[start : start + job.batch_size]
        texts = [_input_text(r, job.with_prompt) for r in batch]
        for record, text in zip(batch, texts):
            if len(tokenizer(text)["input_ids"]) > job.max_length:
                truncated.append(f"{record.prompt_id}\t{record.response_id}")
        vectors = _embed_batch(model, tokenizer, texts, job.max_length)
        if not np.all(np.isfinite(vectors)):
            raise RuntimeError("model produced non-finite embeddings")
        for record, vector in zip(batch, vectors):
            rows.append((record.prompt_id, record.response_id, vector))

    writer = write_embeddings_binary if job.binary else write_embeddings_text
    count = writer(rows, dimension, job.out_path)

    log_path = None
    if truncated:
        log_path = str(Path(job.out_path).with_suffix(".truncated.log"))
        Path(log_path).write_text(
            "\n".join(truncated) + "\n", encoding="utf-8"
        )
    return ExportResult(
        count=count, dimension=dimension, truncated=truncated, log_path=log_path
    )
