"""Evaluation metrics: micro-F1, AUC, MRR, NDCG."""

import numpy as np

from .errors import UsageError


def metric_micro_f1(pred, truth):
    """Micro-averaged F1 over classes (equals accuracy for single-label input)."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if len(pred) == 0 or len(pred) != len(truth):
        raise UsageError(f"micro_f1: need equal nonempty inputs, "
                         f"got {len(pred)} and {len(truth)}")
    classes = np.unique(np.concatenate([pred, truth]))
    tp = fp = fn = 0
    for c in classes:
        tp += np.sum((pred == c) & (truth == c))
        fp += np.sum((pred == c) & (truth != c))
        fn += np.sum((pred != c) & (truth == c))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return float(2.0 * precision * recall / (precision + recall))


def metric_auc(scores, labels):
    """Probability a random positive outscores a random negative, ties 0.5.

    Exact pairwise computation; quadratic but fine at the scales in scope.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise UsageError("auc: both classes must be present")
    diff = pos[:, None] - neg[None, :]
    wins = np.count_nonzero(diff > 0) + 0.5 * np.count_nonzero(diff == 0)
    return float(wins / (len(pos) * len(neg)))


def metric_mrr(ranks):
    """Mean reciprocal rank of the true item over queries."""
    ranks = np.asarray(ranks, dtype=np.float64)
    if len(ranks) == 0:
        raise UsageError("mrr: empty input")
    if np.any(ranks < 1):
        raise UsageError("mrr: ranks must be >= 1")
    return float(np.mean(1.0 / ranks))


def metric_ndcg(relevance_lists):
    """Mean NDCG over queries with DCG = sum rel_i / log2(i+1).

    Queries with all-zero relevance contribute 0.
    """
    if len(relevance_lists) == 0:
        raise UsageError("ndcg: empty input")
    total = 0.0
    for rel in relevance_lists:
        rel = np.asarray(rel, dtype=np.float64)
        if len(rel) == 0:
            raise UsageError("ndcg: empty relevance list")
        discounts = 1.0 / np.log2(np.arange(2, len(rel) + 2))
        ideal = np.sort(rel)[::-1]
        idcg = float(ideal @ discounts)
        if idcg > 0:
            total += float(rel @ discounts) / idcg
    return total / len(relevance_lists)
