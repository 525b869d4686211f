"""Command-line front end.

Exit codes: 0 success, 2 parse/usage error, 3 validation failure,
4 numerical failure, 5 train/test split left a group empty, 6 I/O failure.
Set ``PARITY_FORGE_THREADS`` to cap worker threads (default: CPU count).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import dpr_transform, fit_quantiles, multilabel_debias
from .core import (
    DebiasConfig,
    GroupVector,
    LabelMatrix,
    NumericalError,
    TabularDataset,
    ValidationError,
    one_hot_encode,
    validate,
)
from .evalharness import (
    METHODS,
    METRIC_NAMES,
    ExperimentSpec,
    SplitError,
    convergence_curves,
    sweep,
)
from .metrics import multiclass_dp
from .r2b import DebiasReport, objective_value, r2b_debias
from .synthgen import SynthConfig, generate, inject_bias

logger = logging.getLogger("parity_forge")

EXIT_OK, EXIT_PARSE, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_SPLIT, EXIT_IO = 0, 2, 3, 4, 5, 6


class ParseError(Exception):
    pass


# ---------------------------------------------------------------- CSV I/O

def fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return format(v, ".17g")


def write_table(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else v if isinstance(v, str) else fmt(v) for v in row])


def read_table(path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except (UnicodeDecodeError, csv.Error) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise ParseError(f"{path}:{i}: expected {len(header)} fields, got {len(r)}")
    return header, body


def read_matrix(path) -> tuple[list[str], np.ndarray]:
    header, body = read_table(path)
    try:
        data = np.array([[float(c) for c in r] for r in body], dtype=float).reshape(len(body), len(header))
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return header, data


def write_matrix(path, data, prefix: str):
    data = np.asarray(data)
    write_table(path, [f"{prefix}{j}" for j in range(data.shape[1])], data.tolist())


def read_labels(path) -> LabelMatrix:
    """Soft labels (columns c0..c{L-1}) or hard labels (single column ``y``)."""
    header, data = read_matrix(path)
    if header == ["y"]:
        if np.any(data != np.round(data)):
            raise ParseError(f"{path}: hard labels must be integers")
        y = data[:, 0].astype(np.int64)
        return one_hot_encode(y, max(int(y.max()) + 1, 2))
    return LabelMatrix(data)


def write_labels(path, labels):
    write_matrix(path, np.asarray(labels), "c")


def read_groups(path) -> GroupVector:
    header, data = read_matrix(path)
    if len(header) != 1:
        raise ParseError(f"{path}: expected a single group column, got {header}")
    if np.any(data != np.round(data)):
        raise ParseError(f"{path}: group ids must be integers")
    return GroupVector(data[:, 0].astype(np.int64))


def read_dataset(directory) -> TabularDataset:
    d = Path(directory)
    _, x = read_matrix(d / "features.csv")
    labels = read_labels(d / "labels.csv")
    groups = read_groups(d / "groups.csv")
    return TabularDataset(x, labels, groups)


def write_dataset(directory, data: TabularDataset):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_matrix(d / "features.csv", data.features, "f")
    write_labels(d / "labels.csv", data.labels)
    write_table(d / "groups.csv", ["g"], [[int(g)] for g in data.groups.assignment])


def write_report(path, report, extra_timings=None):
    doc = report.to_dict()
    if extra_timings:
        doc["timings_ms"].update(extra_timings)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, allow_nan=True)
        fh.write("\n")


def thread_count() -> int:
    raw = os.environ.get("PARITY_FORGE_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ParseError(f"PARITY_FORGE_THREADS must be an integer, got {raw!r}")
    return os.cpu_count() or 1


# ---------------------------------------------------------------- commands

def _config(args) -> DebiasConfig:
    return DebiasConfig(
        epsilon=args.epsilon,
        tau=args.tau,
        lam=args.lam,
        max_rounds=args.max_rounds,
    )


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        n_classes=args.classes,
        n_features=args.features,
        n_per_class=args.per_class,
        n_groups=args.groups,
        seed=args.seed,
    )
    data = generate(cfg)
    if args.inject_bias is not None:
        data = inject_bias(data, args.inject_bias, seed=args.seed + 1)
    write_dataset(args.out, data)
    print(
        f"wrote {len(data)} rows ({cfg.n_classes} classes, {cfg.n_features} features, "
        f"{cfg.n_groups} groups) to {args.out}; label DP = {multiclass_dp(data.labels, data.groups):.4f}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_debias(args) -> int:
    labels = read_labels(args.labels)
    groups = read_groups(args.groups)
    labels, groups = validate(labels, groups)
    config = _config(args)
    t0 = time.perf_counter()
    workers = thread_count()
    if args.method == "r2b":
        out, report = r2b_debias(labels, groups, config, workers=workers)
    elif args.method == "r2b0":
        out, report = r2b_debias(labels, groups, replace(config, max_rounds=1), workers=workers)
    else:
        out = multilabel_debias(labels, groups, config)
        report = _static_report(out, labels, groups, config)
    total = (time.perf_counter() - t0) * 1e3
    write_labels(args.out, out)
    if args.report:
        write_report(args.report, report, {"total": total})
    print(f"{args.method}: final DP = {report.final_dp:.6g} after {report.rounds_run} rounds", file=sys.stderr)
    return EXIT_OK


def _static_report(out, labels, groups, config):
    dp = multiclass_dp(out, groups)
    return DebiasReport(
        rounds_run=1,
        dp_trace=[dp],
        primal_trace=[0.0],
        dual_trace=[0.0],
        objective_trace=[objective_value(out, labels, config.lam)],
        final_dp=dp,
        max_clamp_adjustment=0.0,
        config_echo=config,
    )


def cmd_repair_features(args) -> int:
    header, x = read_matrix(args.features)
    groups = read_groups(args.groups)
    if x.shape[0] != len(groups):
        raise ValidationError(ValidationError.LENGTH_MISMATCH, "features and groups disagree on row count")
    table = fit_quantiles(x, groups, args.bins)
    write_table(args.out, header, dpr_transform(x, groups, table).tolist())
    return EXIT_OK


def cmd_eval(args) -> int:
    data = read_dataset(args.data)
    config = _config(args)
    spec = ExperimentSpec(data, args.method.upper(), config, k=args.k, test_fraction=args.test_fraction)
    (result,) = sweep([spec], n_seeds=args.seeds, workers=thread_count())
    header = ["seed", *METRIC_NAMES, *(f"{m}_ci99" for m in METRIC_NAMES)]
    rows = []
    for seed, rep in zip(result.seeds, result.reports):
        row = rep.as_row()
        rows.append([seed, *(row[m] for m in METRIC_NAMES), *([None] * len(METRIC_NAMES))])
    rows.append(["mean", *(result.mean[m] for m in METRIC_NAMES), *(result.ci99[m] for m in METRIC_NAMES)])
    write_table(args.out, header, rows)
    print(f"{result.method}: mean test DP = {result.mean['dp']:.4f}, acc = {result.mean['acc']:.4f}",
          file=sys.stderr)
    return EXIT_OK


def cmd_curves(args) -> int:
    labels = read_labels(args.labels)
    groups = read_groups(args.groups)
    labels, groups = validate(labels, groups)
    try:
        eps = [float(e) for e in args.epsilons.split(",") if e.strip()]
    except ValueError as exc:
        raise ParseError(f"--epsilons: {exc}") from exc
    if not eps:
        raise ParseError("--epsilons is empty")
    rows = convergence_curves(labels, groups, eps, args.rounds, DebiasConfig(tau=args.tau, lam=args.lam))
    cols = ["epsilon", "round", "training_dp", "primal_residual", "dual_residual"]
    write_table(args.out, cols, [[r[c] for c in cols] for r in rows])
    return EXIT_OK


def _probability(text):
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in [0, 1]")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"{text} is not a positive integer")
    return v


def _add_debias_flags(p, with_rounds=True):
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    if with_rounds:
        p.add_argument("--max-rounds", type=_positive_int, default=100)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="parity-forge", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the Gaussian-mixture benchmark")
    p.add_argument("--classes", type=_positive_int, required=True)
    p.add_argument("--features", type=_positive_int, required=True)
    p.add_argument("--per-class", type=_positive_int, required=True)
    p.add_argument("--groups", type=_positive_int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-bias", type=_probability, default=None, metavar="P")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("debias", help="debias a label matrix")
    p.add_argument("--labels", required=True)
    p.add_argument("--groups", required=True)
    p.add_argument("--method", choices=("r2b", "r2b0", "ml"), default="r2b")
    _add_debias_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_debias)

    p = sub.add_parser("repair-features", help="quantile-matching feature repair")
    p.add_argument("--features", required=True)
    p.add_argument("--groups", required=True)
    p.add_argument("--bins", type=_positive_int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_repair_features)

    p = sub.add_parser("eval", help="seeded kNN evaluation of a debiasing method")
    p.add_argument("--data", required=True)
    p.add_argument("--method", type=str.upper, choices=METHODS, required=True)
    _add_debias_flags(p)
    p.add_argument("--seeds", type=_positive_int, default=10)
    p.add_argument("--k", type=_positive_int, default=5)
    p.add_argument("--test-fraction", type=float, default=0.25)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("curves", help="per-round training DP of R2B for several epsilons")
    p.add_argument("--labels", required=True)
    p.add_argument("--groups", required=True)
    p.add_argument("--epsilons", default="0,0.025,0.05,0.075,0.1")
    p.add_argument("--rounds", type=_positive_int, default=100)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_curves)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValidationError as exc:
        print(f"validation error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SplitError as exc:
        print(f"split error: {exc}", file=sys.stderr)
        return EXIT_SPLIT
    except (NumericalError, ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
