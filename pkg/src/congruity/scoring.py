"""Title-image similarity scoring: cosine over paired embeddings."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import MissingEmbeddingsError
from .ingest import ArticleRecord
from .store import EmbeddingStore

TITLE_KEY_SUFFIX = ":title"
THUMB_KEY_SUFFIX = ":thumb"


@dataclass(frozen=True)
class ScoredPair:
    record_id: str
    media: str
    media_label: str
    score: float


def cosine_similarity(a, b) -> float:
    """Cosine of two equal-dimension vectors, accumulated in 64-bit.

    Raises ValueError on dimension mismatch or a zero-norm input; a zero
    norm signals a degenerate embedding upstream and must not be masked
    as similarity 0.
    """
    a64 = np.asarray(a, dtype=np.float64)
    b64 = np.asarray(b, dtype=np.float64)
    if a64.ndim != 1 or b64.ndim != 1 or a64.shape != b64.shape:
        raise ValueError(f"dimension mismatch: {a64.shape} vs {b64.shape}")
    norm_a = math.sqrt(float(np.dot(a64, a64)))
    norm_b = math.sqrt(float(np.dot(b64, b64)))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValueError("zero-norm embedding")
    value = float(np.dot(a64, b64)) / (norm_a * norm_b)
    return min(1.0, max(-1.0, value))


def clip_score(text_embedding, image_embedding) -> float:
    """Similarity of a title embedding and a thumbnail embedding.

    Plain cosine: negative values are preserved (no rectification) and no
    rescaling weight is applied, so orderings and group means downstream
    are unaffected.
    """
    return cosine_similarity(text_embedding, image_embedding)


def title_key(record_id: str) -> str:
    return record_id + TITLE_KEY_SUFFIX


def thumb_key(record_id: str) -> str:
    return record_id + THUMB_KEY_SUFFIX


def score_corpus(records: Iterable[ArticleRecord], store: EmbeddingStore) -> list[ScoredPair]:
    """Score every record's own title against its own thumbnail.

    All records missing either embedding are reported together in one
    :class:`MissingEmbeddingsError`; nothing is silently skipped.
    """
    records = list(records)
    missing = [
        key
        for record in records
        for key in (title_key(record.id), thumb_key(record.id))
        if key not in store
    ]
    if missing:
        raise MissingEmbeddingsError(missing)
    return [
        ScoredPair(
            record_id=record.id,
            media=record.media,
            media_label=record.media_label,
            score=clip_score(store.get(title_key(record.id)), store.get(thumb_key(record.id))),
        )
        for record in records
    ]
