"""Synthetic corpus and embedding generator.

Stands in for a real encoder during tests and demos. Text embeddings are
random unit vectors; each image embedding is its text embedding plus
isotropic noise of expected norm noise_sigma, re-normalized. In high
dimension the mean congruent cosine is therefore close to
1/sqrt(1 + sigma^2), while mismatched pairs score near 0.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .ingest import ArticleRecord
from .scoring import thumb_key, title_key
from .store import EmbeddingStore


def synth_corpus(
    n_per_class: int,
    dim: int = 512,
    noise_sigma: float = 1.0,
    seed: int = 0,
    n_media: int = 5,
) -> tuple[list[ArticleRecord], EmbeddingStore]:
    """Generate n_per_class congruent article/embedding pairs.

    Media ids are assigned round-robin over n_media outlets; all records
    are labeled general (incongruent samples arise later by mismatching).
    Deterministic for a fixed seed, including record timestamps.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if dim < 2:
        raise ValueError("dim must be >= 2")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be nonnegative")
    if n_media < 1:
        raise ValueError("n_media must be >= 1")

    rng = np.random.default_rng(seed)
    records: list[ArticleRecord] = []
    store = EmbeddingStore(dim)
    for i in range(n_per_class):
        record_id = f"art-{i:06d}"
        records.append(
            ArticleRecord(
                id=record_id,
                media=f"media-{i % n_media}",
                media_label="general",
                title=f"synthetic headline {i:06d}",
                article_url=f"https://synthetic.example/articles/{i:06d}",
                published_at=f"2021-01-01T00:{i // 60 % 60:02d}:{i % 60:02d}+00:00",
                has_face=False,
            )
        )
        text = rng.standard_normal(dim)
        text /= np.linalg.norm(text)
        # Noise entries scale as sigma/sqrt(dim) so the noise vector's
        # expected norm is sigma regardless of dimension.
        image = text + rng.standard_normal(dim) * (noise_sigma / np.sqrt(dim))
        image /= np.linalg.norm(image)
        store.add(title_key(record_id), text)
        store.add(thumb_key(record_id), image)
    return records, store


def write_thumbnails(records: list[ArticleRecord], out_dir: str | Path, seed: int = 0) -> dict[str, str]:
    """Write a small solid-color PNG per record; returns id -> path.

    Only used to make the annotation UI drivable against synthetic data.
    """
    from PIL import Image

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths: dict[str, str] = {}
    for record in records:
        color = tuple(int(c) for c in rng.integers(0, 256, size=3))
        path = out_dir / f"{record.id}.png"
        Image.new("RGB", (32, 32), color).save(path)
        paths[record.id] = str(path)
    return paths
