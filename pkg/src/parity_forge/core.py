"""Data types and validation shared by every debiasing routine.

Label matrices are row-stochastic ``N x L`` arrays of class scores; group
vectors assign each row to one of ``R`` sensitive groups. Both are immutable
once built, so they can be handed to worker threads without copying.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ROW_SUM_TOL = 1e-6
ENTRY_TOL = 1e-9


class ParityForgeError(Exception):
    """Base class for all package errors."""


class ValidationError(ParityForgeError, ValueError):
    """Input failed an invariant check.

    ``code`` is one of the ``ValidationError.*`` class constants so callers
    (and the CLI) can branch on the failure without parsing messages.
    """

    ROW_SUM = "row_sum"
    NEGATIVE_ENTRY = "negative_entry"
    ENTRY_RANGE = "entry_range"
    EMPTY_GROUP = "empty_group"
    TOO_FEW_GROUPS = "too_few_groups"
    TOO_FEW_CLASSES = "too_few_classes"
    LENGTH_MISMATCH = "length_mismatch"
    CLASS_RANGE = "class_range"
    SHAPE = "shape"
    NON_FINITE = "non_finite"

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class NumericalError(ParityForgeError, ArithmeticError):
    """Non-finite values appeared during an iterative solve."""

    def __init__(self, message: str, round_index: int | None = None):
        super().__init__(message)
        self.round_index = round_index


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LabelMatrix:
    """Row-stochastic matrix of per-example class scores.

    Rows whose sums are within ``1e-6`` of one are renormalized exactly on
    construction; anything further off raises :class:`ValidationError`.
    """

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data, dtype=float)
        if a.ndim != 2:
            raise ValidationError(ValidationError.SHAPE, f"label matrix must be 2-D, got shape {a.shape}")
        if a.shape[0] < 1:
            raise ValidationError(ValidationError.SHAPE, "label matrix has no rows")
        if a.shape[1] < 2:
            raise ValidationError(ValidationError.TOO_FEW_CLASSES, "need at least 2 classes")
        if not np.all(np.isfinite(a)):
            raise ValidationError(ValidationError.NON_FINITE, "label matrix has non-finite entries")
        if np.any(a < -ENTRY_TOL):
            i, k = np.argwhere(a < -ENTRY_TOL)[0]
            raise ValidationError(ValidationError.NEGATIVE_ENTRY, f"negative entry {a[i, k]!r} at ({i}, {k})")
        if np.any(a > 1 + ENTRY_TOL):
            i, k = np.argwhere(a > 1 + ENTRY_TOL)[0]
            raise ValidationError(ValidationError.ENTRY_RANGE, f"entry {a[i, k]!r} at ({i}, {k}) exceeds 1")
        sums = a.sum(axis=1)
        bad = np.abs(sums - 1.0) > ROW_SUM_TOL
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise ValidationError(ValidationError.ROW_SUM, f"row {i} sums to {sums[i]!r}, expected 1")
        a = np.clip(a, 0.0, 1.0)
        a = a / a.sum(axis=1, keepdims=True)
        object.__setattr__(self, "data", _readonly(a))

    @property
    def n_examples(self) -> int:
        return self.data.shape[0]

    @property
    def n_classes(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def hard(self) -> np.ndarray:
        """Argmax class per row (ties go to the smallest index)."""
        return np.argmax(self.data, axis=1)

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def __len__(self):
        return self.n_examples


@dataclass(frozen=True)
class GroupVector:
    """Assignment of each example to a sensitive group in ``{0, ..., R-1}``.

    ``n_groups`` defaults to ``max(assignment) + 1``. Every group must be
    nonempty and there must be at least two of them.
    """

    assignment: np.ndarray
    n_groups: int | None = None
    sizes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        g = np.asarray(self.assignment)
        if g.ndim != 1:
            raise ValidationError(ValidationError.SHAPE, "group vector must be 1-D")
        if g.size == 0:
            raise ValidationError(ValidationError.SHAPE, "group vector is empty")
        if not np.issubdtype(g.dtype, np.integer):
            if not np.all(np.isfinite(g)) or np.any(g != np.round(g)):
                raise ValidationError(ValidationError.SHAPE, "group ids must be integers")
            g = g.astype(np.int64)
        if np.any(g < 0):
            raise ValidationError(ValidationError.CLASS_RANGE, "group ids must be nonnegative")
        r = int(g.max()) + 1 if self.n_groups is None else int(self.n_groups)
        if g.max() >= r:
            raise ValidationError(ValidationError.CLASS_RANGE, f"group id {int(g.max())} >= n_groups={r}")
        if r < 2:
            raise ValidationError(ValidationError.TOO_FEW_GROUPS, f"need at least 2 groups, got {r}")
        sizes = np.bincount(g, minlength=r)
        if np.any(sizes == 0):
            s = int(np.flatnonzero(sizes == 0)[0])
            raise ValidationError(ValidationError.EMPTY_GROUP, f"group {s} has no members")
        object.__setattr__(self, "assignment", _readonly(g.astype(np.int64)))
        object.__setattr__(self, "n_groups", r)
        object.__setattr__(self, "sizes", _readonly(sizes))

    @property
    def smallest_group(self) -> int:
        return int(self.sizes.min())

    def members(self) -> list[np.ndarray]:
        """Row indices of each group, in group order."""
        order = np.argsort(self.assignment, kind="stable")
        return np.split(order, np.cumsum(self.sizes)[:-1])

    def __array__(self, dtype=None, copy=None):
        return self.assignment if dtype is None else self.assignment.astype(dtype)

    def __len__(self):
        return self.assignment.size


@dataclass(frozen=True)
class DebiasConfig:
    """Tuning knobs for the label debiasers.

    ``early_stop`` turns the residual-based exit on or off; with it off the
    ADMM loop always runs ``max_rounds`` rounds.
    """

    epsilon: float = 0.0
    tau: float = 0.5
    lam: float = 1.0
    max_rounds: int = 100
    residual_tol: float = 1e-6
    outer_tol: float = 1e-9
    inner_tol: float = 1e-10
    early_stop: bool = True

    def __post_init__(self):
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise ValidationError(ValidationError.ENTRY_RANGE, f"epsilon must be >= 0, got {self.epsilon}")
        if not self.tau > 0:
            raise ValidationError(ValidationError.ENTRY_RANGE, f"tau must be > 0, got {self.tau}")
        if not self.lam > 0:
            raise ValidationError(ValidationError.ENTRY_RANGE, f"lambda must be > 0, got {self.lam}")
        if int(self.max_rounds) != self.max_rounds or self.max_rounds < 1:
            raise ValidationError(ValidationError.ENTRY_RANGE, f"max_rounds must be a positive integer, got {self.max_rounds}")
        for name in ("residual_tol", "outer_tol", "inner_tol"):
            if not getattr(self, name) > 0:
                raise ValidationError(ValidationError.ENTRY_RANGE, f"{name} must be > 0")

    def to_dict(self) -> dict:
        return {
            "epsilon": float(self.epsilon),
            "tau": float(self.tau),
            "lambda": float(self.lam),
            "max_rounds": int(self.max_rounds),
            "tolerances": {
                "residual_tol": float(self.residual_tol),
                "outer_tol": float(self.outer_tol),
                "inner_tol": float(self.inner_tol),
            },
            "early_stop": bool(self.early_stop),
        }


@dataclass(frozen=True)
class TabularDataset:
    features: np.ndarray
    labels: LabelMatrix
    groups: GroupVector

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        if x.ndim != 2:
            raise ValidationError(ValidationError.SHAPE, "features must be 2-D")
        n = x.shape[0]
        if self.labels.n_examples != n or len(self.groups) != n:
            raise ValidationError(
                ValidationError.LENGTH_MISMATCH,
                f"row counts differ: features={n}, labels={self.labels.n_examples}, groups={len(self.groups)}",
            )
        object.__setattr__(self, "features", _readonly(x))

    def __len__(self):
        return self.features.shape[0]

    def subset(self, rows: np.ndarray, n_groups: int | None = None) -> TabularDataset:
        """Rows ``rows`` as a new dataset; keeps the parent's group count by default."""
        r = self.groups.n_groups if n_groups is None else n_groups
        return TabularDataset(
            self.features[rows],
            LabelMatrix(self.labels.data[rows]),
            GroupVector(self.groups.assignment[rows], n_groups=r),
        )


def one_hot_encode(hard_labels, n_classes: int) -> LabelMatrix:
    y = np.asarray(hard_labels)
    if y.ndim != 1:
        raise ValidationError(ValidationError.SHAPE, "hard labels must be 1-D")
    if y.size and (np.any(y < 0) or np.any(y >= n_classes) or np.any(y != np.round(y))):
        raise ValidationError(ValidationError.CLASS_RANGE, f"class ids must be integers in [0, {n_classes})")
    out = np.zeros((y.size, n_classes))
    out[np.arange(y.size), y.astype(np.int64)] = 1.0
    return LabelMatrix(out)


def as_labels(labels) -> LabelMatrix:
    return labels if isinstance(labels, LabelMatrix) else LabelMatrix(labels)


def as_groups(groups, n_groups: int | None = None) -> GroupVector:
    if isinstance(groups, GroupVector):
        return groups
    return GroupVector(np.asarray(groups), n_groups=n_groups)


def validate(labels, groups) -> tuple[LabelMatrix, GroupVector]:
    """Check a label matrix / group vector pair and return the typed objects.

    Raises :class:`ValidationError` with a distinguishing ``code`` on the
    first violated invariant. Has no side effects.
    """
    lm = as_labels(labels)
    gv = as_groups(groups)
    if lm.n_examples != len(gv):
        raise ValidationError(
            ValidationError.LENGTH_MISMATCH,
            f"labels have {lm.n_examples} rows but groups have {len(gv)} entries",
        )
    return lm, gv
