"""Reduction-to-binary ADMM debiaser.

Each round debiases every class column on its own (the binary tasks solved
by :mod:`parity_forge.subsolver`), projects the aggregated scores back onto
the affine set of row-stochastic-sum matrices, and takes a scaled dual step.
At convergence the per-class solutions ``H`` and the normalized consensus
``Z`` coincide, which gives a matrix that is simultaneously row-normalized
and ``epsilon``-fair.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import DebiasConfig, GroupVector, LabelMatrix, NumericalError, validate
from .metrics import multiclass_dp
from .subsolver import ClassSubproblem, solve_class

logger = logging.getLogger(__name__)


def normalize_rows(m) -> np.ndarray:
    """Euclidean projection of each row onto ``{v : sum(v) = 1}``.

    Entries may leave ``[0, 1]``; only the row sums are fixed.
    """
    m = np.asarray(m, dtype=float)
    return m - (m.sum(axis=1, keepdims=True) - 1.0) / m.shape[1]


def objective_value(candidate, labels, lam: float = 1.0) -> float:
    """``sum_i (lam/2)||yhat_i||^2 - yhat_i . y_i``."""
    c = np.asarray(candidate, dtype=float)
    y = np.asarray(labels, dtype=float)
    if c.shape != y.shape:
        raise ValueError(f"shape mismatch {c.shape} vs {y.shape}")
    return float(0.5 * lam * np.sum(c * c) - np.sum(c * y))


def clamp_rows(m) -> tuple[np.ndarray, float]:
    """Clip to ``[0, 1]``, divide rows by their sums; also return the largest entry change."""
    m = np.asarray(m, dtype=float)
    c = np.clip(m, 0.0, 1.0)
    sums = c.sum(axis=1, keepdims=True)
    degenerate = sums[:, 0] <= 0.0
    if np.any(degenerate):
        c[degenerate] = 1.0 / m.shape[1]
        sums[degenerate] = 1.0
    out = c / sums
    return out, float(np.max(np.abs(out - m)))


@dataclass
class AdmmState:
    H: np.ndarray
    Z: np.ndarray
    U: np.ndarray
    round: int = 0
    primal_residual: float = float("inf")
    dual_residual: float = float("inf")

    @classmethod
    def initial(cls, labels: np.ndarray) -> AdmmState:
        # warm start at the labels: a fair input is then a fixed point from round one
        y = np.asarray(labels, dtype=float)
        return cls(H=y.copy(), Z=y.copy(), U=np.zeros_like(y))


@dataclass
class DebiasReport:
    rounds_run: int
    dp_trace: list[float]
    primal_trace: list[float]
    dual_trace: list[float]
    objective_trace: list[float]
    final_dp: float
    max_clamp_adjustment: float
    config_echo: DebiasConfig
    timings_ms: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "config": self.config_echo.to_dict(),
            "rounds_run": self.rounds_run,
            "dp_trace": [float(v) for v in self.dp_trace],
            "primal_trace": [float(v) for v in self.primal_trace],
            "dual_trace": [float(v) for v in self.dual_trace],
            "objective_trace": [float(v) for v in self.objective_trace],
            "final_dp": float(self.final_dp),
            "max_clamp_adjustment": float(self.max_clamp_adjustment),
            "timings_ms": {k: float(v) for k, v in self.timings_ms.items()},
        }


def debias_columns(scores: np.ndarray, groups: GroupVector, epsilon: float, quad_weight: float,
                   config: DebiasConfig, executor=None) -> np.ndarray:
    """Solve the class subproblem for every column of ``scores``."""

    def solve(k):
        sub = ClassSubproblem(scores[:, k], groups, epsilon, quad_weight)
        return solve_class(sub, config.outer_tol, config.inner_tol).values

    cols = range(scores.shape[1])
    results = executor.map(solve, cols) if executor is not None else map(solve, cols)
    return np.column_stack(list(results))


def r2b_round(state: AdmmState, labels: np.ndarray, groups: GroupVector, config: DebiasConfig,
              executor=None) -> AdmmState:
    """One ADMM round: parallel class debiasing, row normalization, dual update."""
    y = np.asarray(labels, dtype=float)
    t = state.round + 1
    F = y + config.tau * (state.Z - state.U)
    if not np.all(np.isfinite(F)):
        raise NumericalError(f"non-finite scores entering round {t}", round_index=t)
    H = debias_columns(F, groups, config.epsilon, config.lam + config.tau, config, executor)
    Z = normalize_rows(H + state.U)
    U = state.U + H - Z
    if not (np.all(np.isfinite(Z)) and np.all(np.isfinite(U))):
        raise NumericalError(f"non-finite iterate after round {t}", round_index=t)
    return AdmmState(
        H=H,
        Z=Z,
        U=U,
        round=t,
        primal_residual=float(np.linalg.norm(Z - H)),
        dual_residual=float(np.linalg.norm(Z - state.Z)),
    )


def r2b_debias(labels, groups, config: DebiasConfig | None = None, workers: int | None = None,
               callback=None) -> tuple[LabelMatrix, DebiasReport]:
    """Debias ``labels`` to ``config.epsilon`` multiclass demographic parity.

    Parameters
    ----------
    labels : LabelMatrix or array_like
        ``N x L`` row-stochastic scores.
    groups : GroupVector or array_like
        Sensitive group of each row.
    config : DebiasConfig, optional
        Defaults to ``DebiasConfig()`` (epsilon 0, tau 0.5, 100 rounds).
    workers : int, optional
        Thread count for the per-class solves inside a round. ``None`` or 1
        solves the classes sequentially.
    callback : callable, optional
        Called as ``callback(state)`` after every round.

    Returns
    -------
    LabelMatrix, DebiasReport
        The debiased labels (``Z`` clamped to ``[0, 1]`` and renormalized) and
        the per-round diagnostics.
    """
    config = config or DebiasConfig()
    lm, gv = validate(labels, groups)
    y = lm.data
    n, n_classes = y.shape
    threshold = config.residual_tol * np.sqrt(n * n_classes)

    dp_trace, primal, dual, obj = [], [], [], []
    state = AdmmState.initial(y)
    t0 = time.perf_counter()
    executor = ThreadPoolExecutor(workers) if workers and workers > 1 else None
    try:
        while state.round < config.max_rounds:
            state = r2b_round(state, y, gv, config, executor)
            view, _ = clamp_rows(state.Z)
            dp_trace.append(multiclass_dp(view, gv))
            primal.append(state.primal_residual)
            dual.append(state.dual_residual)
            obj.append(objective_value(view, y, config.lam))
            if callback is not None:
                callback(state)
            logger.debug("round %d: dp=%.3g primal=%.3g dual=%.3g", state.round, dp_trace[-1],
                         state.primal_residual, state.dual_residual)
            if config.early_stop and state.primal_residual + state.dual_residual <= threshold:
                break
    finally:
        if executor is not None:
            executor.shutdown()
    elapsed = (time.perf_counter() - t0) * 1e3

    out, adjustment = clamp_rows(state.Z)
    result = LabelMatrix(out)
    report = DebiasReport(
        rounds_run=state.round,
        dp_trace=dp_trace,
        primal_trace=primal,
        dual_trace=dual,
        objective_trace=obj,
        final_dp=multiclass_dp(result, gv),
        max_clamp_adjustment=adjustment,
        config_echo=config,
        timings_ms={"admm": elapsed, "per_round": elapsed / max(state.round, 1)},
    )
    return result, report
