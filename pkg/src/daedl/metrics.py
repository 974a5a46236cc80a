"""Ranking and calibration metrics.

Scores are confidences: higher means more likely positive (ID, or
correctly classified).
"""
import math
from collections import defaultdict
from fractions import Fraction

import numpy as np
from scipy.stats import rankdata

from .errors import DomainError

# above this many recall steps average precision falls back to float terms
EXACT_AP_LIMIT = 20000


def _binary(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise DomainError("scores and labels differ in length")
    if not np.all((labels == 0) | (labels == 1)):
        raise DomainError("labels must be 0 or 1")
    if labels.all() or not labels.any():
        raise DomainError("both classes must be present")
    if not np.all(np.isfinite(scores)):
        raise DomainError("scores must be finite")
    return scores, labels.astype(bool)


def auroc(scores, labels):
    """Mann-Whitney AUC with ties counted as one half."""
    scores, pos = _binary(scores, labels)
    n_pos = int(pos.sum())
    n_neg = len(pos) - n_pos
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _threshold_counts(scores, pos):
    """Cumulative (tp, fp) at each distinct score, from high to low."""
    order = np.argsort(-scores, kind="mergesort")
    s, p = scores[order], pos[order]
    last = np.r_[s[1:] != s[:-1], True]
    tp = np.cumsum(p)[last]
    fp = np.cumsum(~p)[last]
    return tp, fp


def aupr(scores, labels):
    """Average precision; tied scores form a single threshold."""
    scores, pos = _binary(scores, labels)
    tp, fp = _threshold_counts(scores, pos)
    gained = np.diff(np.r_[0, tp])
    keep = gained > 0
    num, den = tp[keep] * gained[keep], tp[keep] + fp[keep]
    if len(num) > EXACT_AP_LIMIT:
        # each term rounded once; result within 1 ulp of the exact value
        return math.fsum(num / (den * tp[-1]))
    # exact rational sum, so the result is correctly rounded
    by_den = defaultdict(int)
    for n, d in zip(num.tolist(), den.tolist()):
        by_den[d] += n
    return float(sum((Fraction(n, d) for d, n in by_den.items()), Fraction(0)) / int(tp[-1]))


def aupr_trapezoid(scores, labels):
    """Trapezoidal area under the precision-recall curve, starting at recall 0."""
    scores, pos = _binary(scores, labels)
    tp, fp = _threshold_counts(scores, pos)
    precision = tp / (tp + fp)
    recall = np.r_[0.0, tp / tp[-1]]
    precision = np.r_[precision[0], precision]
    return float(np.sum(np.diff(recall) * (precision[1:] + precision[:-1]) / 2.0))


def brier(probs, labels):
    """Mean squared distance to the one-hot label, times 100."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or labels.shape != (len(probs),):
        raise DomainError("probs must be (N, C) with one label per row")
    if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-9):
        raise DomainError("every row of probs must lie on the simplex")
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(labels)), labels] = 1.0
    return float(100.0 * np.mean(np.sum((probs - onehot) ** 2, axis=1)))


def accuracy(preds, labels):
    preds = np.asarray(preds).ravel()
    labels = np.asarray(labels).ravel()
    if preds.shape != labels.shape:
        raise DomainError("predictions and labels differ in length")
    if len(preds) == 0:
        raise DomainError("accuracy of an empty set is undefined")
    return float(np.mean(preds == labels))
