"""Fairness and accuracy metrics.

All functions accept either the typed containers from :mod:`parity_forge.core`
or plain arrays. Score matrices are not required to be row-stochastic here so
the same code can inspect intermediate ADMM iterates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import GroupVector, ValidationError, as_groups


def _scores(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim != 2:
        raise ValidationError(ValidationError.SHAPE, f"score matrix must be 2-D, got shape {a.shape}")
    return a


def _truth(x, n: int) -> np.ndarray:
    t = np.asarray(x)
    if t.ndim == 2:
        t = np.argmax(t, axis=1)
    if t.shape != (n,):
        raise ValidationError(ValidationError.LENGTH_MISMATCH, f"expected {n} true labels, got {t.shape}")
    return t.astype(np.int64)


def _check_len(scores: np.ndarray, groups: GroupVector):
    if scores.shape[0] != len(groups):
        raise ValidationError(
            ValidationError.LENGTH_MISMATCH,
            f"scores have {scores.shape[0]} rows but groups have {len(groups)} entries",
        )


def group_means(scores, groups) -> np.ndarray:
    """``R x L`` table whose entry ``(s, k)`` is the mean score of class ``k`` in group ``s``."""
    s = _scores(scores)
    g = as_groups(groups)
    _check_len(s, g)
    totals = np.zeros((g.n_groups, s.shape[1]))
    np.add.at(totals, g.assignment, s)
    return totals / g.sizes[:, None]


def dp_per_class(scores, groups) -> np.ndarray:
    m = group_means(scores, groups)
    return m.max(axis=0) - m.min(axis=0)


def multiclass_dp(scores, groups) -> float:
    """Worst class-wise gap between the largest and smallest group mean score."""
    return float(dp_per_class(scores, groups).max())


def accuracy(predicted, truth) -> float:
    p = _scores(predicted)
    t = _truth(truth, p.shape[0])
    return float(np.mean(np.argmax(p, axis=1) == t))


def _rank_of_truth(p: np.ndarray, t: np.ndarray) -> np.ndarray:
    # position of the true class in a descending sort with smallest-index tie-breaking
    true_score = p[np.arange(p.shape[0]), t][:, None]
    cols = np.arange(p.shape[1])[None, :]
    ahead = (p > true_score) | ((p == true_score) & (cols < t[:, None]))
    return ahead.sum(axis=1)


def top_k_accuracy(predicted, truth, k: int) -> float:
    p = _scores(predicted)
    if not 1 <= k <= p.shape[1]:
        raise ValidationError(ValidationError.CLASS_RANGE, f"k must be in [1, {p.shape[1]}], got {k}")
    t = _truth(truth, p.shape[0])
    return float(np.mean(_rank_of_truth(p, t) < k))


def tv_accuracy(predicted, truth) -> float:
    """Mean of ``1 - TV(pred_row, true_row)`` over rows."""
    p = _scores(predicted)
    q = _scores(truth)
    if p.shape != q.shape:
        raise ValidationError(ValidationError.SHAPE, f"shape mismatch {p.shape} vs {q.shape}")
    return float(np.mean(1.0 - 0.5 * np.abs(p - q).sum(axis=1)))


def group_error_rates(predicted, truth, groups) -> np.ndarray:
    p = _scores(predicted)
    g = as_groups(groups)
    _check_len(p, g)
    t = _truth(truth, p.shape[0])
    wrong = (np.argmax(p, axis=1) != t).astype(float)
    return np.bincount(g.assignment, weights=wrong, minlength=g.n_groups) / g.sizes


def error_parity(predicted, truth, groups) -> float:
    """Spread of the per-group 0-1 loss of argmax predictions."""
    losses = group_error_rates(predicted, truth, groups)
    return float(losses.max() - losses.min())


@dataclass
class MetricReport:
    dp: float
    accuracy: float
    tv_accuracy: float
    error_parity: float
    top_k_accuracy: dict[int, float] = field(default_factory=dict)

    def as_row(self) -> dict[str, float]:
        row = {"dp": self.dp, "acc": self.accuracy}
        for k in (2, 3):
            row[f"top{k}"] = self.top_k_accuracy.get(k, float("nan"))
        row["tv_acc"] = self.tv_accuracy
        row["error_parity"] = self.error_parity
        return row


def evaluate(predicted, truth_labels, groups, top_ks=(2, 3)) -> MetricReport:
    """Every metric at once; ``truth_labels`` is the true label matrix."""
    p = _scores(predicted)
    q = _scores(truth_labels)
    hard = np.argmax(q, axis=1)
    return MetricReport(
        dp=multiclass_dp(p, groups),
        accuracy=accuracy(p, hard),
        tv_accuracy=tv_accuracy(p, q),
        error_parity=error_parity(p, hard, groups),
        top_k_accuracy={k: top_k_accuracy(p, hard, k) for k in top_ks if k <= p.shape[1]},
    )
