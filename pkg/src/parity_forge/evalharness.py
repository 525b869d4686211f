"""kNN evaluation of debiasing methods and seeded experiment sweeps."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence, Union

import numpy as np
from scipy import stats

from .baselines import fit_quantiles, dpr_transform, multilabel_debias, r2b0
from .core import (
    DebiasConfig,
    GroupVector,
    LabelMatrix,
    ParityForgeError,
    TabularDataset,
    ValidationError,
    one_hot_encode,
)
from .metrics import MetricReport, evaluate, multiclass_dp
from .r2b import r2b_debias

logger = logging.getLogger(__name__)

METHODS = ("BL", "DPR", "ML", "R2B0", "R2B")
METRIC_NAMES = ("dp", "acc", "top2", "top3", "tv_acc", "error_parity")


class SplitError(ParityForgeError, ValueError):
    """A random split left some group without members."""


@dataclass(frozen=True)
class KnnModel:
    """Brute-force Euclidean kNN over soft label rows.

    Holds no group information, so nothing downstream of training can see
    the sensitive attribute.
    """

    train_features: np.ndarray
    train_labels: LabelMatrix
    k: int = 5

    def __post_init__(self):
        x = np.asarray(self.train_features, dtype=float)
        if x.ndim != 2 or x.shape[0] != self.train_labels.n_examples:
            raise ValidationError(ValidationError.LENGTH_MISMATCH, "features and labels disagree on row count")
        if not 1 <= self.k <= x.shape[0]:
            raise ValidationError(ValidationError.ENTRY_RANGE, f"k must be in [1, {x.shape[0]}], got {self.k}")
        object.__setattr__(self, "train_features", x)


def knn_neighbors(model: KnnModel, query_features, chunk_rows: int = 256) -> np.ndarray:
    """Indices of the ``k`` nearest training rows per query (ties -> smaller index).

    Candidates are screened with the expanded ``|q|^2 + |x|^2 - 2 q.x`` form and
    then re-ranked on exact squared differences, so rounding in the fast path
    cannot reorder ties.
    """
    q = np.asarray(query_features, dtype=float)
    x = model.train_features
    if q.ndim != 2 or q.shape[1] != x.shape[1]:
        raise ValidationError(ValidationError.SHAPE, f"query must have {x.shape[1]} columns, got {q.shape}")
    k = model.k
    xx = np.einsum("nd,nd->n", x, x)
    out = np.empty((q.shape[0], k), dtype=np.int64)
    for start in range(0, q.shape[0], chunk_rows):
        block = q[start:start + chunk_rows]
        qq = np.einsum("qd,qd->q", block, block)
        approx = qq[:, None] + xx[None, :] - 2.0 * block @ x.T
        kth = np.partition(approx, k - 1, axis=1)[:, k - 1]
        slack = 1e-9 * (qq + xx.max()) + 1e-12
        for r in range(block.shape[0]):
            cand = np.flatnonzero(approx[r] <= kth[r] + slack[r])
            diff = x[cand] - block[r]
            exact = np.einsum("nd,nd->n", diff, diff)
            out[start + r] = cand[np.lexsort((cand, exact))[:k]]
    return out


def knn_predict(model: KnnModel, query_features) -> LabelMatrix:
    idx = knn_neighbors(model, query_features)
    return LabelMatrix(model.train_labels.data[idx].mean(axis=1))


def train_test_split(n: int, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_test = int(round(test_fraction * n))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def _checked_subset(data: TabularDataset, rows: np.ndarray, part: str, seed: int) -> TabularDataset:
    r = data.groups.n_groups
    counts = np.bincount(data.groups.assignment[rows], minlength=r)
    if np.any(counts == 0):
        raise SplitError(
            f"{part} split (seed {seed}) has empty groups {np.flatnonzero(counts == 0).tolist()}; "
            f"group sizes {counts.tolist()}"
        )
    return data.subset(rows)


def debias_training(train: TabularDataset, method: str, config: DebiasConfig):
    """Apply ``method`` to the training split; returns (features, labels, feature_transform)."""
    if method == "BL":
        return train.features, train.labels, None
    if method == "ML":
        return train.features, multilabel_debias(train.labels, train.groups, config), None
    if method == "R2B0":
        return train.features, r2b0(train.labels, train.groups, config), None
    if method == "R2B":
        return train.features, r2b_debias(train.labels, train.groups, config)[0], None
    if method == "DPR":
        table = fit_quantiles(train.features, train.groups)
        return dpr_transform(train.features, train.groups, table), train.labels, table
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def run_experiment(dataset: TabularDataset, method: str, config: DebiasConfig | None = None,
                   split_seed: int = 0, test_fraction: float = 0.25, k: int = 5) -> MetricReport:
    """Split, debias the training part with ``method``, fit kNN, score the test part."""
    method = method.upper()
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    config = config or DebiasConfig()
    train_rows, test_rows = train_test_split(len(dataset), test_fraction, split_seed)
    train = _checked_subset(dataset, train_rows, "training", split_seed)
    test = _checked_subset(dataset, test_rows, "test", split_seed)

    features, labels, table = debias_training(train, method, config)
    model = KnnModel(features, labels, k=k)
    query = test.features if table is None else dpr_transform(test.features, test.groups, table)
    predicted = knn_predict(model, query)
    return evaluate(predicted, test.labels, test.groups)


DatasetSource = Union[TabularDataset, Callable[[int], TabularDataset]]


@dataclass(frozen=True)
class ExperimentSpec:
    """One grid point: a dataset (or seed -> dataset factory), a method and its config."""

    dataset: DatasetSource
    method: str
    config: DebiasConfig = field(default_factory=DebiasConfig)
    name: str = ""
    k: int = 5
    test_fraction: float = 0.25

    @property
    def label(self) -> str:
        return self.name or self.method


@dataclass
class ExperimentResult:
    method: str
    reports: list[MetricReport]
    seeds: list[int]
    mean: dict[str, float]
    ci99: dict[str, float]


def confidence_halfwidth(values, level: float = 0.99) -> float:
    """Student-t half-width of the mean; NaN with fewer than two values."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float("nan")
    t = stats.t.ppf(0.5 + level / 2, df=v.size - 1)
    return float(t * v.std(ddof=1) / np.sqrt(v.size))


def aggregate(reports: Sequence[MetricReport], level: float = 0.99) -> tuple[dict, dict]:
    rows = [r.as_row() for r in reports]
    mean, ci = {}, {}
    for name in METRIC_NAMES:
        col = [row[name] for row in rows]
        mean[name] = float(np.mean(col))
        ci[name] = confidence_halfwidth(col, level)
    return mean, ci


def _run_one(spec: ExperimentSpec, seed: int) -> MetricReport:
    data = spec.dataset(seed) if callable(spec.dataset) else spec.dataset
    try:
        return run_experiment(data, spec.method, spec.config, split_seed=seed,
                              test_fraction=spec.test_fraction, k=spec.k)
    except ParityForgeError as exc:
        exc.args = (f"[{spec.label}, seed {seed}] {exc}",)
        raise


def sweep(grid: Sequence[ExperimentSpec], n_seeds: int = 10, workers: int | None = None,
          seeds: Sequence[int] | None = None) -> list[ExperimentResult]:
    """Run every grid point on the same seeds and aggregate mean and 99% CI."""
    if not grid:
        raise ValueError("empty experiment grid")
    seeds = list(range(n_seeds)) if seeds is None else list(seeds)
    jobs = [(spec, s) for spec in grid for s in seeds]
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            reports = list(pool.map(lambda job: _run_one(*job), jobs))
    else:
        reports = [_run_one(*job) for job in jobs]
    results = []
    for i, spec in enumerate(grid):
        chunk = reports[i * len(seeds):(i + 1) * len(seeds)]
        mean, ci = aggregate(chunk)
        results.append(ExperimentResult(spec.label, chunk, seeds, mean, ci))
    return results


def convergence_curves(labels, groups, epsilons: Sequence[float], rounds: int = 100,
                       config: DebiasConfig | None = None) -> list[dict]:
    """Per-round training DP and residuals of R2B, one block per epsilon.

    Early stopping is disabled so every block has exactly ``rounds`` rows.
    """
    base = config or DebiasConfig()
    rows = []
    for eps in epsilons:
        cfg = replace(base, epsilon=float(eps), max_rounds=int(rounds), early_stop=False)
        _, rep = r2b_debias(labels, groups, cfg)
        for t in range(rep.rounds_run):
            rows.append({
                "epsilon": float(eps),
                "round": t + 1,
                "training_dp": rep.dp_trace[t],
                "primal_residual": rep.primal_trace[t],
                "dual_residual": rep.dual_trace[t],
            })
    return rows


ADULT_COLUMNS = (
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status", "occupation",
    "relationship", "race", "sex", "capital-gain", "capital-loss", "hours-per-week", "native-country",
    "income",
)
ADULT_NUMERIC = ("age", "fnlwgt", "capital-gain", "capital-loss", "hours-per-week")


def load_adult(path) -> TabularDataset:
    """Adult Income as (features, education one-hot over 16 levels, sex in {0, 1}).

    Reads the UCI comma-separated layout, with or without a header row.
    Rows with missing values ('?') are dropped. Numeric columns are
    standardized; categorical ones are one-hot encoded. Education, its
    numeric code, and sex are excluded from the features.
    """
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            rec = [c.strip() for c in rec]
            if len(rec) != len(ADULT_COLUMNS) or rec[0] == "age" or "?" in rec:
                continue
            rows.append(dict(zip(ADULT_COLUMNS, rec)))
    if not rows:
        raise ValidationError(ValidationError.SHAPE, f"no Adult records found in {path}")
    education = sorted({r["education"] for r in rows})
    y = np.array([education.index(r["education"]) for r in rows])
    sexes = sorted({r["sex"] for r in rows})
    g = np.array([sexes.index(r["sex"]) for r in rows])
    cols = []
    for name in ADULT_NUMERIC:
        v = np.array([float(r[name]) for r in rows])
        cols.append(((v - v.mean()) / (v.std() or 1.0))[:, None])
    for name in ("workclass", "marital-status", "occupation", "relationship", "race", "native-country", "income"):
        levels = sorted({r[name] for r in rows})
        cols.append(np.array([[r[name] == lv for lv in levels] for r in rows], dtype=float))
    return TabularDataset(np.hstack(cols), one_hot_encode(y, len(education)), GroupVector(g))


def label_dp(dataset: TabularDataset) -> float:
    return multiclass_dp(dataset.labels, dataset.groups)
