import math

import numpy as np
import pytest

from congruity.scoring import clip_score, score_corpus, thumb_key, title_key
from congruity.synth import synth_corpus


class TestSynthCorpus:
    def test_zero_noise_scores_one(self):
        records, store = synth_corpus(20, dim=16, noise_sigma=0.0, seed=3)
        for pair in score_corpus(records, store):
            assert pair.score == pytest.approx(1.0, abs=1e-6)

    def test_same_seed_identical_output(self):
        records_a, store_a = synth_corpus(10, dim=8, noise_sigma=1.0, seed=5)
        records_b, store_b = synth_corpus(10, dim=8, noise_sigma=1.0, seed=5)
        assert records_a == records_b
        assert store_a == store_b

    def test_different_seed_differs(self):
        _, store_a = synth_corpus(10, dim=8, noise_sigma=1.0, seed=5)
        _, store_b = synth_corpus(10, dim=8, noise_sigma=1.0, seed=6)
        assert store_a != store_b

    def test_media_round_robin(self):
        records, _ = synth_corpus(10, dim=4, seed=0, n_media=5)
        media = [r.media for r in records]
        assert media[:5] == [f"media-{i}" for i in range(5)]
        assert media[5:] == media[:5]

    def test_congruent_and_mismatched_score_distributions(self):
        """At sigma=1 in 512-d the congruent mean sits near 1/sqrt(2) and a
        mismatched pairing scores near 0 (direct Monte-Carlo simulation of
        the generative model gives 0.7071 and 0.0)."""
        records, store = synth_corpus(1000, dim=512, noise_sigma=1.0, seed=11)
        congruent = [p.score for p in score_corpus(records, store)]
        assert np.mean(congruent) == pytest.approx(1 / math.sqrt(2), abs=0.02)
        mismatched = [
            clip_score(
                store.get(title_key(records[i].id)),
                store.get(thumb_key(records[(i + 1) % len(records)].id)),
            )
            for i in range(len(records))
        ]
        assert np.mean(mismatched) == pytest.approx(0.0, abs=0.05)

    def test_records_are_valid_and_general(self):
        records, store = synth_corpus(7, dim=4, seed=1)
        assert all(r.media_label == "general" for r in records)
        assert all(r.has_face is False for r in records)
        assert len(store) == 14

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            synth_corpus(0)
        with pytest.raises(ValueError):
            synth_corpus(5, dim=1)
        with pytest.raises(ValueError):
            synth_corpus(5, noise_sigma=-0.1)
