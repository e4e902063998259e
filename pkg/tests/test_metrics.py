"""The rank-sum AUC must equal the literal pairwise definition exactly —
not within a tolerance — because both reduce to the same half-integer
numerator. F1 is pinned by hand-counted confusion matrices."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from queryrec.metrics import SingleClassTestSet, f1_score, pairwise_auc, rank_sum_auc


class TestAucPinnedCases:
    def test_perfect_ordering(self):
        assert rank_sum_auc([0.9, 0.1], [1, 0]) == 1.0

    def test_inverted_ordering(self):
        assert rank_sum_auc([0.1, 0.9], [1, 0]) == 0.0

    def test_all_ties_give_half(self):
        assert rank_sum_auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == 0.5

    def test_single_tie_counts_half(self):
        # pos scores (0.7, 0.5), neg scores (0.5, 0.2):
        # pairs: 0.7>0.5, 0.7>0.2, 0.5=0.5 (half), 0.5>0.2 -> 3.5/4
        assert rank_sum_auc([0.7, 0.5, 0.5, 0.2], [1, 1, 0, 0]) == 3.5 / 4

    def test_single_class_rejected(self):
        with pytest.raises(SingleClassTestSet):
            rank_sum_auc([0.1, 0.2], [1, 1])
        with pytest.raises(SingleClassTestSet):
            pairwise_auc([0.1, 0.2], [0, 0])


class TestAucMatchesPairwiseOracle:
    """Exact agreement with the O(n^2) count, including heavy ties."""

    @given(st.integers(0, 2 ** 31 - 1), st.integers(2, 200), st.integers(1, 8))
    @settings(max_examples=60, deadline=None)
    def test_random_vectors(self, seed, n, distinct):
        rng = np.random.default_rng(seed)
        # few distinct values force ties across and within classes
        scores = rng.choice(rng.normal(size=distinct), size=n)
        labels = rng.integers(0, 2, size=n)
        if labels.sum() in (0, n):
            labels[0] = 0
            labels[-1] = 1
        assert rank_sum_auc(scores, labels) == pairwise_auc(scores, labels)

    def test_thousand_vector_sweep(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            n = int(rng.integers(2, 201))
            scores = rng.choice(rng.normal(size=int(rng.integers(1, 12))), size=n)
            labels = rng.integers(0, 2, size=n)
            if labels.sum() in (0, n):
                labels[0] = 0
                labels[-1] = 1
            assert rank_sum_auc(scores, labels) == pairwise_auc(scores, labels)


class TestF1:
    def test_hand_counted_confusion_matrix(self):
        # TP=1 (0.9/1), FP=1 (0.8/0), FN=1 (0.2/1), TN=1 (0.1/0) -> F1 = 0.5
        scores = [0.9, 0.8, 0.2, 0.1]
        labels = [1, 0, 1, 0]
        assert f1_score(scores, labels) == 0.5

    def test_perfect_classifier(self):
        assert f1_score([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0

    def test_threshold_is_inclusive(self):
        assert f1_score([0.5], [1], threshold=0.5) == 1.0

    def test_degenerate_empty_positive_world(self):
        assert f1_score([0.1, 0.2], [0, 0]) == 0.0

    def test_custom_threshold(self):
        # at 0.85 only the 0.9 prediction stays positive: TP=1, FP=0, FN=1
        assert f1_score([0.9, 0.8, 0.2], [1, 1, 0], threshold=0.85) == 2 * 1 / (2 * 1 + 0 + 1)


@given(st.lists(st.tuples(st.floats(-10, 10), st.integers(0, 1)),
                min_size=2, max_size=60))
@settings(max_examples=60, deadline=None)
def test_auc_is_complement_under_label_flip(pairs):
    scores = np.array([p[0] for p in pairs])
    labels = np.array([p[1] for p in pairs])
    if labels.sum() in (0, len(labels)):
        labels[0] = 0
        labels[-1] = 1
    auc = rank_sum_auc(scores, labels)
    flipped = rank_sum_auc(-scores, labels)
    assert abs((auc + flipped) - 1.0) < 1e-12
