"""Ranking and classification metrics used by the evaluation path."""

from __future__ import annotations

import numpy as np


def auc(scores, labels) -> float:
    """Probability that a random positive outranks a random negative.

    Rank based with tie splitting: tied pairs count one half. Raises if only
    one class is present.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-D and aligned")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auc needs both classes present")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(s.size, dtype=np.float64)
    sorted_scores = s[order]
    start = 0
    while start < s.size:
        end = start
        while end + 1 < s.size and sorted_scores[end + 1] == sorted_scores[start]:
            end += 1
        ranks[order[start : end + 1]] = 0.5 * (start + end) + 1.0
        start = end + 1
    pos_rank_sum = float(ranks[y].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def average_precision(scores, labels) -> float:
    """Mean of precision at each positive's rank, scores descending.

    Ties are ordered by ascending index, which keeps the value deterministic.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-D and aligned")
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive")
    order = np.lexsort((np.arange(s.size), -s))
    hits = y[order]
    cum = np.cumsum(hits)
    precision_at = cum / np.arange(1, s.size + 1)
    return float(precision_at[hits].sum() / n_pos)


def accuracy_and_error(predicted, expected) -> tuple[float, float]:
    """Zero-one accuracy and error; the two always sum to exactly one."""
    p = np.asarray(predicted)
    e = np.asarray(expected)
    if p.shape != e.shape or p.ndim != 1 or p.size == 0:
        raise ValueError("predictions and targets must be non-empty and aligned")
    wrong = int((p != e).sum())
    total = p.size
    return (total - wrong) / total, wrong / total
