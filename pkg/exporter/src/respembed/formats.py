"""Wire formats shared with the pair-selection toolkit.

The exporter stays decoupled from the toolkit package and speaks only its
file formats: the line-delimited groups file on the way in, and the text or
binary embeddings file on the way out. Binary files start with the magic
bytes ``REALEMB1``, a little-endian u32 dimension, then per record a u16 key
length, the key ``prompt_id`` NUL ``response_id``, and the float32 vector.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

BINARY_MAGIC = b"REALEMB1"


@dataclass
class ResponseText:
    prompt_id: str
    response_id: str
    prompt: Optional[str]
    text: str


def read_groups(path) -> list[ResponseText]:
    """Flatten a groups file into (prompt, response) text records."""
    records: list[ResponseText] = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        prompt_id = obj.get("prompt_id")
        responses = obj.get("responses")
        if not prompt_id or not isinstance(responses, list) or len(responses) < 2:
            raise ValueError(f"{path}:{lineno}: need prompt_id and >= 2 responses")
        for r in responses:
            rid = r.get("response_id")
            if not rid:
                raise ValueError(f"{path}:{lineno}: response without response_id")
            body = r.get("text")
            if not body:
                raise ValueError(
                    f"{path}:{lineno}: response {rid!r} has no text to embed"
                )
            records.append(
                ResponseText(
                    prompt_id=prompt_id,
                    response_id=rid,
                    prompt=obj.get("prompt"),
                    text=body,
                )
            )
    return records


def write_embeddings_text(
    records: Iterable[tuple[str, str, np.ndarray]], dimension: int, path
) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as out:
        out.write(json.dumps({"dim": int(dimension)}) + "\n")
        for prompt_id, response_id, values in records:
            rec = {
                "prompt_id": prompt_id,
                "response_id": response_id,
                "values": [float(v) for v in np.asarray(values, dtype=np.float32)],
            }
            out.write(json.dumps(rec, ensure_ascii=False) + "\n")
            count += 1
    return count


def write_embeddings_binary(
    records: Iterable[tuple[str, str, np.ndarray]], dimension: int, path
) -> int:
    count = 0
    with open(path, "wb") as out:
        out.write(BINARY_MAGIC)
        out.write(struct.pack("<I", int(dimension)))
        for prompt_id, response_id, values in records:
            key = prompt_id.encode("utf-8") + b"\x00" + response_id.encode("utf-8")
            if len(key) > 0xFFFF:
                raise ValueError(f"key too long: ({prompt_id!r}, {response_id!r})")
            out.write(struct.pack("<H", len(key)))
            out.write(key)
            out.write(np.asarray(values, dtype="<f4").tobytes())
            count += 1
    return count
