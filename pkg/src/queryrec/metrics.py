"""Binary ranking metrics: rank-sum AUC (ties at 0.5) and thresholded F1.

``rank_sum_auc`` is the production implementation; ``pairwise_auc`` is the
O(n^2) definition kept as its oracle. Both compute exact half-integer
numerators, so they agree bitwise, not merely within tolerance.
"""

from __future__ import annotations

import numpy as np


class SingleClassTestSet(ValueError):
    """AUC is undefined when only one label value is present."""


def _validate(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and the same length")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be 0 or 1")
    return scores, labels.astype(np.int64)


def rank_sum_auc(scores, labels) -> float:
    """P(score of random positive > score of random negative), ties as 0.5.

    Computed from tie-averaged ranks: AUC = (R+ - n+(n+ + 1)/2) / (n+ n-)
    where R+ is the rank sum of the positives.
    """
    scores, labels = _validate(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassTestSet("need at least one positive and one negative")

    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    ranks = np.empty(scores.size, dtype=np.float64)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        # ranks are 1-based; a tie group gets the average of its rank range,
        # which is an exact half-integer
        ranks[order[i:j + 1]] = (i + 1 + j + 1) / 2.0
        i = j + 1

    rank_sum_pos = float(ranks[labels == 1].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def pairwise_auc(scores, labels) -> float:
    """Literal O(n^2) definition; the oracle rank_sum_auc must match exactly."""
    scores, labels = _validate(scores, labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if pos.size == 0 or neg.size == 0:
        raise SingleClassTestSet("need at least one positive and one negative")
    wins = float((pos[:, None] > neg[None, :]).sum())
    ties = float((pos[:, None] == neg[None, :]).sum())
    return (wins + 0.5 * ties) / (pos.size * neg.size)


def f1_score(scores, labels, threshold: float = 0.5) -> float:
    """F1 of the classifier predict-positive-iff-score >= threshold;
    0.0 when no positives exist in either predictions or labels."""
    scores, labels = _validate(scores, labels)
    pred = scores >= threshold
    tp = int(np.sum(pred & (labels == 1)))
    fp = int(np.sum(pred & (labels == 0)))
    fn = int(np.sum(~pred & (labels == 1)))
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 0.0
    return 2.0 * tp / denom
