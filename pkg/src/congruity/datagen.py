"""Labeled congruity dataset generation.

High-scoring pairs from trustworthy sources become congruent samples; each
then gets two incongruent partners by swapping its title with one drawn
from the same media outlet and one from a different outlet, strictly
within the sample's own pool.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DatagenError
from .ingest import ArticleRecord
from .scoring import ScoredPair

POOLS = ("train", "validation", "test")
ORIGINS = ("original", "same_media", "cross_media")
CONGRUENT = "congruent"
INCONGRUENT = "incongruent"


@dataclass(frozen=True)
class PairSample:
    """One dataset unit: an image paired with a (possibly swapped) title."""

    sample_id: str
    image_record_id: str
    title_record_id: str
    label: str
    origin: str
    pool: str

    def __post_init__(self):
        if self.label not in (CONGRUENT, INCONGRUENT):
            raise ValueError(f"bad label {self.label!r}")
        if self.origin not in ORIGINS:
            raise ValueError(f"bad origin {self.origin!r}")
        if self.pool not in POOLS:
            raise ValueError(f"bad pool {self.pool!r}")
        same_record = self.image_record_id == self.title_record_id
        if (self.label == CONGRUENT) != (self.origin == "original"):
            raise ValueError("label congruent iff origin original")
        if (self.label == CONGRUENT) != same_record:
            raise ValueError("congruent samples pair a record with itself, incongruent never do")


@dataclass(frozen=True)
class GenerationConfig:
    congruent_quantile: float = 0.75
    pool_fractions: tuple[float, float, float] = (0.80, 0.10, 0.10)
    seed: int = 0
    # Exact pool sizes override the fractions when set (the fractions
    # cannot reproduce every historically used split).
    pool_counts: tuple[int, int, int] | None = None

    def __post_init__(self):
        if not 0.0 < self.congruent_quantile <= 1.0:
            raise ValueError("congruent_quantile must be in (0, 1]")
        if len(self.pool_fractions) != 3 or any(f < 0 for f in self.pool_fractions):
            raise ValueError("pool_fractions must be three nonnegative reals")
        if abs(sum(self.pool_fractions) - 1.0) > 1e-9:
            raise ValueError("pool_fractions must sum to 1")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")


def select_congruent(scored: Sequence[ScoredPair], config: GenerationConfig) -> list[str]:
    """Ids of the floor(q*n) highest-scoring pairs.

    Ties are broken by ascending record id so the selection is stable
    across runs and platforms.
    """
    if not scored:
        raise ValueError("cannot select congruent pairs from an empty score list")
    if any(not math.isfinite(p.score) for p in scored):
        raise ValueError("scores must be finite")
    k = int(config.congruent_quantile * len(scored))
    ordered = sorted(scored, key=lambda p: (-p.score, p.record_id))
    return [p.record_id for p in ordered[:k]]


def split_pools(
    ids: Sequence[str], config: GenerationConfig
) -> tuple[list[str], list[str], list[str]]:
    """Deterministic shuffle under the config seed, then a three-way cut.

    Fraction mode uses (floor(f1*n), floor(f2*n), remainder); exact
    pool_counts are honored verbatim when configured.
    """
    ids = list(ids)
    if len(set(ids)) != len(ids):
        raise ValueError("ids must be unique")
    n = len(ids)
    if config.pool_counts is not None:
        sizes = tuple(config.pool_counts)
        if any(s < 0 for s in sizes) or sum(sizes) != n:
            raise ValueError(f"pool_counts {sizes} do not sum to the {n} available ids")
    else:
        f1, f2, _ = config.pool_fractions
        n1, n2 = int(f1 * n), int(f2 * n)
        sizes = (n1, n2, n - n1 - n2)
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(n)
    shuffled = [ids[i] for i in order]
    train = shuffled[: sizes[0]]
    validation = shuffled[sizes[0] : sizes[0] + sizes[1]]
    test = shuffled[sizes[0] + sizes[1] :]
    return train, validation, test


def generate_samples(
    pool_ids: Sequence[str],
    records: Mapping[str, ArticleRecord],
    seed: int,
    pool: str,
) -> list[PairSample]:
    """Emit 1 congruent + 2 incongruent samples per pool id (2:1 ratio).

    Mismatch titles are drawn uniformly, with replacement across targets,
    from other pool members: one sharing the target's media, one from a
    different media. Only ids inside the pool are ever used.
    """
    if pool not in POOLS:
        raise ValueError(f"bad pool {pool!r}")
    pool_ids = list(pool_ids)
    by_media: dict[str, list[str]] = {}
    for record_id in pool_ids:
        by_media.setdefault(records[record_id].media, []).append(record_id)

    lonely = sorted(m for m, members in by_media.items() if len(members) < 2)
    if lonely:
        raise DatagenError(
            f"pool {pool!r}: media with a single record cannot supply same-media "
            f"mismatches: {', '.join(lonely)}"
        )
    if len(by_media) < 2:
        raise DatagenError(f"pool {pool!r}: cross-media mismatches need at least 2 media")

    cross_by_media = {
        media: [rid for rid in pool_ids if records[rid].media != media] for media in by_media
    }
    position = {
        rid: idx for members in by_media.values() for idx, rid in enumerate(members)
    }

    rng = np.random.default_rng(seed)
    samples: list[PairSample] = []
    for target in pool_ids:
        media = records[target].media
        samples.append(
            PairSample(f"{target}|original", target, target, CONGRUENT, "original", pool)
        )
        # Uniform draw over same-media candidates excluding the target:
        # shift indices at and beyond the target's own slot by one.
        group = by_media[media]
        k = int(rng.integers(0, len(group) - 1))
        same_title = group[k if k < position[target] else k + 1]
        samples.append(
            PairSample(f"{target}|same_media", target, same_title, INCONGRUENT, "same_media", pool)
        )
        cross_candidates = cross_by_media[media]
        cross_title = cross_candidates[int(rng.integers(0, len(cross_candidates)))]
        samples.append(
            PairSample(
                f"{target}|cross_media", target, cross_title, INCONGRUENT, "cross_media", pool
            )
        )
    return samples
