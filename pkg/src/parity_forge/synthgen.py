"""Synthetic Gaussian-mixture benchmark with a label-correlated sensitive attribute."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GroupVector, TabularDataset, ValidationError, one_hot_encode


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    ``mean_variance`` and ``component_variance`` both default to ``1/d``.
    ``attribute_bias`` is the probability that the group is set to
    ``1{y == 0}`` instead of being drawn uniformly.
    """

    n_classes: int
    n_features: int
    n_per_class: int
    n_groups: int = 5
    seed: int = 0
    mean_variance: float | None = None
    component_variance: float | None = None
    attribute_bias: float = 0.5

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValidationError(ValidationError.TOO_FEW_CLASSES, "n_classes must be >= 2")
        if self.n_features < 1 or self.n_per_class < 1:
            raise ValidationError(ValidationError.ENTRY_RANGE, "n_features and n_per_class must be >= 1")
        if self.n_groups < 2:
            raise ValidationError(ValidationError.TOO_FEW_GROUPS, "n_groups must be >= 2")
        if not 0.0 <= self.attribute_bias <= 1.0:
            raise ValidationError(ValidationError.ENTRY_RANGE, "attribute_bias must be a probability")

    @property
    def sigma2_mean(self) -> float:
        return 1.0 / self.n_features if self.mean_variance is None else self.mean_variance

    @property
    def sigma2_component(self) -> float:
        return 1.0 / self.n_features if self.component_variance is None else self.component_variance


def generate(config: SynthConfig) -> TabularDataset:
    """Draw a dataset; identical configs (including seed) give identical arrays."""
    rng = np.random.default_rng(config.seed)
    L, d, n = config.n_classes, config.n_features, config.n_per_class
    means = rng.normal(0.0, np.sqrt(config.sigma2_mean), size=(L, d))
    y = np.repeat(np.arange(L), n)
    x = means[y] + rng.normal(0.0, np.sqrt(config.sigma2_component), size=(L * n, d))
    tied = rng.random(L * n) < config.attribute_bias
    uniform = rng.integers(0, config.n_groups, size=L * n)
    g = np.where(tied, (y == 0).astype(np.int64), uniform)
    return TabularDataset(x, one_hot_encode(y, L), GroupVector(g, n_groups=config.n_groups))


def inject_bias(dataset: TabularDataset, p: float, seed: int) -> TabularDataset:
    """With probability ``p`` per example, overwrite the label with the example's group id."""
    if not 0.0 <= p <= 1.0:
        raise ValidationError(ValidationError.ENTRY_RANGE, f"p must be a probability, got {p}")
    L = dataset.labels.n_classes
    if dataset.groups.n_groups > L:
        raise ValidationError(
            ValidationError.CLASS_RANGE,
            f"cannot map {dataset.groups.n_groups} groups onto {L} classes",
        )
    rng = np.random.default_rng(seed)
    flip = rng.random(len(dataset)) < p
    if not flip.any():
        return dataset
    labels = np.array(dataset.labels.data)
    rows = np.flatnonzero(flip)
    labels[rows] = 0.0
    labels[rows, dataset.groups.assignment[rows]] = 1.0
    return TabularDataset(dataset.features, type(dataset.labels)(labels), dataset.groups)
