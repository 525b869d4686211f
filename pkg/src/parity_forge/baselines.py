"""Comparison methods: independent per-label debiasing, single-round R2B,
and a quantile-matching feature repairer with equal-mass binning."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import DebiasConfig, LabelMatrix, NumericalError, ValidationError, as_groups, validate
from .r2b import debias_columns, r2b_debias

MAX_BINS = 256


def multilabel_debias(labels, groups, config: DebiasConfig | None = None) -> LabelMatrix:
    """Debias each class column on its own, then divide every row by its sum.

    The division step can reintroduce bias, so the output carries no
    demographic-parity guarantee.
    """
    config = config or DebiasConfig()
    lm, gv = validate(labels, groups)
    h = debias_columns(lm.data, gv, config.epsilon, config.lam, config)
    sums = h.sum(axis=1, keepdims=True)
    if np.any(sums <= 1e-12):
        i = int(np.flatnonzero(sums[:, 0] <= 1e-12)[0])
        raise NumericalError(f"row {i} vanished after per-class debiasing")
    return LabelMatrix(h / sums)


def r2b0(labels, groups, config: DebiasConfig | None = None) -> LabelMatrix:
    """R2B stopped after a single round."""
    config = replace(config or DebiasConfig(), max_rounds=1)
    out, _ = r2b_debias(labels, groups, config)
    return out


@dataclass(frozen=True)
class QuantileTable:
    """Equal-mass quantile knots, ``knots[j][s]`` for feature ``j`` and group ``s``.

    Stored as an array of shape ``(d, R, B + 1)``.
    """

    knots: np.ndarray

    @property
    def n_bins(self) -> int:
        return self.knots.shape[2] - 1

    @property
    def probs(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_bins + 1)


def default_bins(groups) -> int:
    return int(min(as_groups(groups).smallest_group, MAX_BINS))


def fit_quantiles(features, groups, n_bins: int | None = None) -> QuantileTable:
    x = np.asarray(features, dtype=float)
    gv = as_groups(groups)
    if x.ndim != 2 or x.shape[0] != len(gv):
        raise ValidationError(ValidationError.LENGTH_MISMATCH, "features and groups disagree on row count")
    n_bins = default_bins(gv) if n_bins is None else int(n_bins)
    if n_bins < 1:
        raise ValidationError(ValidationError.ENTRY_RANGE, f"n_bins must be >= 1, got {n_bins}")
    probs = np.linspace(0.0, 1.0, n_bins + 1)
    knots = np.empty((x.shape[1], gv.n_groups, n_bins + 1))
    for s, idx in enumerate(gv.members()):
        # method="linear" interpolates between order statistics
        knots[:, s, :] = np.quantile(x[idx], probs, axis=0, method="linear").T
    return QuantileTable(knots)


def _rank(x: np.ndarray, knots: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Empirical CDF from quantile knots, clamped to [0, 1] outside the fitted range.

    Values sitting on a run of tied knots get the midpoint of that run's
    probabilities so that a constant feature maps to rank 1/2.
    """
    left = np.searchsorted(knots, x, side="left")
    right = np.searchsorted(knots, x, side="right")
    last = len(knots) - 1
    tied = right > left
    out = np.empty_like(x)
    out[tied] = 0.5 * (probs[left[tied]] + probs[right[tied] - 1])
    i = left[~tied]
    below = i == 0
    above = i > last
    inner = ~(below | above)
    r = np.empty(i.shape)
    r[below] = 0.0
    r[above] = 1.0
    j = i[inner]
    xv = x[~tied][inner]
    r[inner] = probs[j - 1] + (xv - knots[j - 1]) / (knots[j] - knots[j - 1]) * (probs[j] - probs[j - 1])
    out[~tied] = r
    return out


def dpr_transform(features, groups, table: QuantileTable) -> np.ndarray:
    """Full-repair quantile matching: send each value to the cross-group average quantile at its rank."""
    x = np.asarray(features, dtype=float)
    gv = as_groups(groups)
    d, n_groups, _ = table.knots.shape
    if x.ndim != 2 or x.shape[1] != d:
        raise ValidationError(ValidationError.SHAPE, f"expected {d} features, got shape {x.shape}")
    if gv.n_groups != n_groups or len(gv) != x.shape[0]:
        raise ValidationError(ValidationError.LENGTH_MISMATCH, "groups do not match the fitted table")
    probs = table.probs
    # averaging piecewise-linear quantile functions on a shared grid = averaging their knots
    target = table.knots.mean(axis=1)
    out = np.empty_like(x)
    for s, idx in enumerate(gv.members()):
        for j in range(d):
            tau = _rank(x[idx, j], table.knots[j, s], probs)
            out[idx, j] = np.interp(tau, probs, target[j])
    return out
