"""Detector evaluation: accuracy, AUROC, rankings, and top-k precision."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .datagen import INCONGRUENT
from .errors import MissingLabelsError


@dataclass(frozen=True)
class EvalReport:
    split_name: str
    n: int
    accuracy: float
    auroc: float


@dataclass(frozen=True)
class PrecisionCurve:
    points: tuple[tuple[int, float], ...]
    annotated_count: int


def accuracy(predictions: Sequence[tuple[str, str]]) -> float:
    """Fraction of (predicted, true) pairs that match exactly."""
    if not predictions:
        raise ValueError("accuracy requires at least one prediction")
    return sum(1 for predicted, true in predictions if predicted == true) / len(predictions)


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank range."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def auroc(scored: Sequence[tuple[float, str]]) -> float:
    """Area under the ROC curve by the rank-sum statistic, midrank ties.

    The positive class is the incongruent label; higher prediction scores
    must mean more confidently incongruent.
    """
    scores = np.array([s for s, _ in scored], dtype=np.float64)
    positives = np.array([label == INCONGRUENT for _, label in scored], dtype=bool)
    n_pos = int(positives.sum())
    n_neg = len(scored) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auroc requires both classes")
    ranks = _midranks(scores)
    rank_sum = float(ranks[positives].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def rank_articles(scored: Iterable[tuple[str, float]]) -> list[tuple[str, float]]:
    """Descending by prediction score; ties broken by record id."""
    scored = list(scored)
    if any(not math.isfinite(score) for _, score in scored):
        raise ValueError("prediction scores must be finite")
    return sorted(scored, key=lambda pair: (-pair[1], pair[0]))


def top_k_precision(
    ranked_ids: Sequence[str], labels: Mapping[str, str], ks: Sequence[int]
) -> PrecisionCurve:
    """Fraction of the top-k records humans labeled incongruent, per k.

    Every record inside the deepest requested k must be labeled; the
    error lists the unlabeled ids so they can drive an annotation queue.
    """
    ks = sorted(set(int(k) for k in ks))
    if any(k <= 0 for k in ks):
        raise ValueError("every k must be positive")
    annotated_count = sum(1 for record_id in ranked_ids if record_id in labels)
    if not ks:
        return PrecisionCurve((), annotated_count)
    if ks[-1] > len(ranked_ids):
        raise ValueError(f"k={ks[-1]} exceeds the {len(ranked_ids)} ranked records")
    head = ranked_ids[: ks[-1]]
    missing = [record_id for record_id in head if record_id not in labels]
    if missing:
        raise MissingLabelsError(missing)
    points = []
    positives = 0
    k_iter = iter(ks)
    next_k = next(k_iter)
    for depth, record_id in enumerate(head, start=1):
        if labels[record_id] == INCONGRUENT:
            positives += 1
        if depth == next_k:
            points.append((depth, positives / depth))
            next_k = next(k_iter, None)
            if next_k is None:
                break
    return PrecisionCurve(tuple(points), annotated_count)
