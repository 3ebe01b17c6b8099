import numpy as np
import pytest

from congruity.datagen import CONGRUENT, INCONGRUENT
from congruity.errors import MissingLabelsError
from congruity.evaluation import accuracy, auroc, rank_articles, top_k_precision


def brute_force_auroc(scored) -> float:
    """Oracle: mean over all positive x negative pairs, ties counted half."""
    positives = [s for s, label in scored if label == INCONGRUENT]
    negatives = [s for s, label in scored if label == CONGRUENT]
    total = 0.0
    for p in positives:
        for n in negatives:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(positives) * len(negatives))


class TestAccuracy:
    def test_all_correct(self):
        assert accuracy([(CONGRUENT, CONGRUENT), (INCONGRUENT, INCONGRUENT)]) == 1.0

    def test_three_of_four(self):
        pairs = [
            (CONGRUENT, CONGRUENT),
            (INCONGRUENT, INCONGRUENT),
            (CONGRUENT, CONGRUENT),
            (CONGRUENT, INCONGRUENT),
        ]
        assert accuracy(pairs) == 0.75

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            accuracy([])


class TestAuroc:
    def test_perfect_separation(self):
        scored = [(0.9, INCONGRUENT), (0.8, INCONGRUENT), (0.2, CONGRUENT), (0.1, CONGRUENT)]
        assert auroc(scored) == 1.0

    def test_three_of_four_pairs_ordered(self):
        scored = [(0.9, INCONGRUENT), (0.3, INCONGRUENT), (0.4, CONGRUENT), (0.1, CONGRUENT)]
        assert auroc(scored) == 0.75

    def test_all_scores_equal_is_half(self):
        scored = [(0.5, INCONGRUENT), (0.5, INCONGRUENT), (0.5, CONGRUENT)]
        assert auroc(scored) == 0.5

    def test_single_class_raises(self):
        with pytest.raises(ValueError, match="both classes"):
            auroc([(0.5, INCONGRUENT)])

    def test_equals_brute_force_on_random_instances_with_ties(self):
        rng = np.random.default_rng(17)
        for _ in range(200):
            n = int(rng.integers(2, 51))
            labels = [INCONGRUENT if x else CONGRUENT for x in rng.integers(0, 2, size=n)]
            if len(set(labels)) < 2:
                labels[0], labels[1] = INCONGRUENT, CONGRUENT
            # Coarse grid of score values forces plenty of ties.
            scores = rng.integers(0, 5, size=n) / 4.0
            scored = list(zip(scores.tolist(), labels))
            assert auroc(scored) == pytest.approx(brute_force_auroc(scored), abs=1e-15)

    def test_invariant_under_increasing_transform(self):
        rng = np.random.default_rng(23)
        scores = rng.standard_normal(30)
        labels = [INCONGRUENT if x else CONGRUENT for x in rng.integers(0, 2, size=30)]
        labels[0], labels[1] = INCONGRUENT, CONGRUENT
        base = auroc(list(zip(scores.tolist(), labels)))
        warped = auroc(list(zip(np.exp(scores).tolist(), labels)))
        assert warped == pytest.approx(base, abs=1e-15)


def test_accuracy_complement_under_label_flip():
    """Flipping every true label on binary predictions complements the
    accuracy exactly; checked on balanced synthetic threshold outputs."""
    from congruity.detect import ThresholdModel, threshold_predict

    rng = np.random.default_rng(6)
    model = ThresholdModel(0.5)
    scores = rng.uniform(0, 1, size=40)
    truths = [INCONGRUENT if i % 2 else CONGRUENT for i in range(40)]
    flipped = [CONGRUENT if t == INCONGRUENT else INCONGRUENT for t in truths]
    predictions = [threshold_predict(model, s)[0] for s in scores]
    base = accuracy(list(zip(predictions, truths)))
    complement = accuracy(list(zip(predictions, flipped)))
    assert base + complement == pytest.approx(1.0, abs=1e-15)


class TestRankArticles:
    def test_descending_order(self):
        ranked = rank_articles([("a", 0.1), ("b", 0.9), ("c", 0.5)])
        assert [r[0] for r in ranked] == ["b", "c", "a"]

    def test_ties_broken_by_id(self):
        ranked = rank_articles([("z", 0.5), ("a", 0.5), ("m", 0.5)])
        assert [r[0] for r in ranked] == ["a", "m", "z"]

    def test_deterministic_on_two_hundred_items(self):
        rng = np.random.default_rng(4)
        scored = [(f"r{i:03d}", float(rng.integers(0, 9) / 8)) for i in range(200)]
        first = rank_articles(scored)
        rng.shuffle(scored)
        assert rank_articles(scored) == first

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            rank_articles([("a", float("nan"))])


class TestTopKPrecision:
    def test_eight_of_ten(self):
        ranked = [f"r{i}" for i in range(10)]
        labels = {rid: INCONGRUENT for rid in ranked[:8]}
        labels.update({rid: CONGRUENT for rid in ranked[8:]})
        curve = top_k_precision(ranked, labels, [10])
        assert curve.points == ((10, 0.8),)

    def test_seventeen_of_twenty(self):
        ranked = [f"r{i}" for i in range(20)]
        labels = {rid: INCONGRUENT for rid in ranked[:17]}
        labels.update({rid: CONGRUENT for rid in ranked[17:]})
        assert top_k_precision(ranked, labels, [20]).points == ((20, 0.85),)

    def test_all_congruent_is_zero(self):
        ranked = ["a", "b", "c"]
        labels = {rid: CONGRUENT for rid in ranked}
        assert top_k_precision(ranked, labels, [3]).points == ((3, 0.0),)

    def test_missing_label_lists_ids(self):
        ranked = ["a", "b", "c"]
        with pytest.raises(MissingLabelsError) as excinfo:
            top_k_precision(ranked, {"a": INCONGRUENT}, [3])
        assert excinfo.value.missing_ids == ["b", "c"]

    def test_empty_ks_empty_curve(self):
        curve = top_k_precision(["a"], {"a": INCONGRUENT}, [])
        assert curve.points == ()
        assert curve.annotated_count == 1

    def test_k_beyond_ranking_rejected(self):
        with pytest.raises(ValueError, match="exceeds"):
            top_k_precision(["a"], {"a": INCONGRUENT}, [2])

    def test_multiple_ks_strictly_increasing(self):
        ranked = [f"r{i}" for i in range(6)]
        labels = {rid: INCONGRUENT if i % 2 == 0 else CONGRUENT for i, rid in enumerate(ranked)}
        curve = top_k_precision(ranked, labels, [4, 2, 6, 4])
        assert [k for k, _ in curve.points] == [2, 4, 6]

    def test_prepending_a_positive_respects_lower_bound(self):
        """precision at k+1 after prepending a positive is (k*p + 1)/(k+1),
        which is >= k*p/(k+1)."""
        rng = np.random.default_rng(2)
        for trial in range(30):
            k = int(rng.integers(1, 20))
            ranked = [f"r{i}" for i in range(k)]
            labels = {
                rid: INCONGRUENT if rng.integers(0, 2) else CONGRUENT for rid in ranked
            }
            p = top_k_precision(ranked, labels, [k]).points[0][1]
            new_ranked = ["top"] + ranked
            labels["top"] = INCONGRUENT
            p_new = top_k_precision(new_ranked, labels, [k + 1]).points[0][1]
            assert p_new == pytest.approx((k * p + 1) / (k + 1), abs=1e-12)
            assert p_new >= k * p / (k + 1)
