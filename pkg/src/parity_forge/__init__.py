"""Multiclass demographic-parity label debiasing by reduction to per-class binary tasks."""

__version__ = "0.1.0"

from .core import (
    DebiasConfig,
    GroupVector,
    LabelMatrix,
    NumericalError,
    ParityForgeError,
    TabularDataset,
    ValidationError,
    one_hot_encode,
    validate,
)
from .metrics import accuracy, error_parity, group_means, multiclass_dp, top_k_accuracy, tv_accuracy
from .r2b import DebiasReport, normalize_rows, objective_value, r2b_debias
from .baselines import dpr_transform, fit_quantiles, multilabel_debias, r2b0

__all__ = [
    "DebiasConfig",
    "DebiasReport",
    "GroupVector",
    "LabelMatrix",
    "NumericalError",
    "ParityForgeError",
    "TabularDataset",
    "ValidationError",
    "accuracy",
    "dpr_transform",
    "error_parity",
    "fit_quantiles",
    "group_means",
    "multiclass_dp",
    "multilabel_debias",
    "normalize_rows",
    "objective_value",
    "one_hot_encode",
    "r2b0",
    "r2b_debias",
    "top_k_accuracy",
    "tv_accuracy",
    "validate",
]
