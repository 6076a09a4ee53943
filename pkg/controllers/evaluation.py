"""
Experiment driver: error-factor curves, stratified k-fold cross-validation,
query-point sweeps and the plain-vs-chained restart comparison, plus the
CSV / text / gnuplot report writers.
"""

import logging
import math
import os
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd

from controllers.errors import ClassTooSmallError, ModelError
from controllers.features import Dataset, FeatureVector, LabeledExample
from controllers.model import (
    PipelineConfig,
    predict,
    train,
    train_chained,
    train_class_models,
)

logger = logging.getLogger(__name__)

DEFAULT_FACTORS = (1.0, 1.25, 1.5, 2.0, 3.0, 5.0, 10.0, 20.0, 50.0, 100.0, math.inf)
CLASSES = ("all", "sat", "unsat")


# ============== ERROR FACTOR ==============

def error_factor(pred_log: float, actual_log: float, factor: float) -> bool:
    """True when max(pred/actual, actual/pred) <= factor, evaluated in log space."""
    if not factor >= 1:
        raise ValueError(f"error factor must be >= 1, got {factor}")
    return abs(pred_log - actual_log) <= math.log(factor)


@dataclass(frozen=True)
class ErrorFactorCurve:
    label: str
    factors: tuple[float, ...]
    fractions: tuple[float, ...]
    count: int

    def fraction_at(self, factor: float) -> float:
        return self.fractions[self.factors.index(factor)]


def error_factor_curve(preds: Sequence[float], actuals: Sequence[float],
                       factors: Sequence[float] = DEFAULT_FACTORS, label: str = "all") -> ErrorFactorCurve:
    factors = tuple(sorted(float(f) for f in factors))
    diffs = np.abs(np.asarray(preds, dtype=np.float64) - np.asarray(actuals, dtype=np.float64))
    if diffs.size == 0:
        return ErrorFactorCurve(label, factors, tuple(0.0 for _ in factors), 0)
    fractions = tuple(float(np.mean(diffs <= math.log(f))) for f in factors)
    return ErrorFactorCurve(label, factors, fractions, int(diffs.size))


def rmse(preds: Sequence[float], actuals: Sequence[float]) -> float:
    diff = np.asarray(preds, dtype=np.float64) - np.asarray(actuals, dtype=np.float64)
    return float(np.sqrt(np.mean(diff * diff))) if diff.size else 0.0


# ============== CROSS VALIDATION ==============

def stratified_folds(satisfiable: Sequence[bool], folds: int, seed: int) -> np.ndarray:
    """
    Fold id per instance. Each class is shuffled with the seeded generator and
    dealt round-robin, continuing the deal across classes so fold sizes differ
    by at most one.
    """
    if folds < 2:
        raise ValueError("need at least 2 folds")
    flags = np.asarray(satisfiable, dtype=bool)
    assignment = np.empty(len(flags), dtype=np.int64)
    rng = np.random.Generator(np.random.PCG64(seed))
    dealt = 0
    for cls in (True, False):
        members = np.flatnonzero(flags == cls)
        if 0 < len(members) < folds:
            raise ClassTooSmallError(
                f"{'sat' if cls else 'unsat'} class has {len(members)} instances, fewer than {folds} folds")
        order = rng.permutation(members)
        assignment[order] = (dealt + np.arange(len(order))) % folds
        dealt += len(order)
    return assignment


@dataclass(frozen=True)
class Prediction:
    instance_id: str
    satisfiable: bool
    fold: int
    actual: float
    predicted: float
    baseline: float


@dataclass(frozen=True)
class FoldMetrics:
    fold: int
    n_train: int
    n_test: int
    rmse: float
    baseline_rmse: float


@dataclass(frozen=True)
class CrossValidationReport:
    method: str
    lam: float
    folds: tuple[FoldMetrics, ...]
    predictions: tuple[Prediction, ...]
    factors: tuple[float, ...] = DEFAULT_FACTORS

    def _subset(self, label: str) -> list[Prediction]:
        if label == "all":
            return list(self.predictions)
        return [p for p in self.predictions if p.satisfiable == (label == "sat")]

    def curve(self, label: str = "all", predictor: str = "lmp") -> ErrorFactorCurve:
        subset = self._subset(label)
        preds = [p.predicted if predictor == "lmp" else p.baseline for p in subset]
        return error_factor_curve(preds, [p.actual for p in subset], self.factors, label)

    def curves(self, predictor: str = "lmp") -> list[ErrorFactorCurve]:
        return [self.curve(label, predictor) for label in CLASSES if self._subset(label)]

    @property
    def rmse(self) -> float:
        return rmse([p.predicted for p in self.predictions], [p.actual for p in self.predictions])

    @property
    def baseline_rmse(self) -> float:
        return rmse([p.baseline for p in self.predictions], [p.actual for p in self.predictions])


def cross_validate(examples: Sequence[LabeledExample], config: PipelineConfig = PipelineConfig(),
                   folds: int = 10, seed: int = 0,
                   factors: Sequence[float] = DEFAULT_FACTORS) -> CrossValidationReport:
    """
    Seeded stratified k-fold CV. Every instance is tested exactly once; the
    baseline predicts the training-fold mean label.
    """
    examples = list(examples)
    assignment = stratified_folds([e.satisfiable for e in examples], folds, seed)
    fold_metrics = []
    predictions = []
    for fold in range(folds):
        train_set = [e for e, f in zip(examples, assignment) if f != fold]
        test_set = [e for e, f in zip(examples, assignment) if f == fold]
        models = train_class_models(train_set, config)
        baseline = float(np.mean([e.label for e in train_set]))
        fold_preds = [
            Prediction(e.instance_id, e.satisfiable, fold, e.label,
                       models.predict(e.features, config.split, satisfiable=e.satisfiable), baseline)
            for e in test_set
        ]
        predictions.extend(fold_preds)
        fold_metrics.append(FoldMetrics(
            fold=fold,
            n_train=len(train_set),
            n_test=len(test_set),
            rmse=rmse([p.predicted for p in fold_preds], [p.actual for p in fold_preds]),
            baseline_rmse=rmse([p.baseline for p in fold_preds], [p.actual for p in fold_preds]),
        ))
    report = CrossValidationReport(config.split.value, config.lam, tuple(fold_metrics),
                                   tuple(predictions), tuple(sorted(factors)))
    logger.info("cv (%s, lambda=%g): rmse %.4f vs baseline %.4f",
                report.method, config.lam, report.rmse, report.baseline_rmse)
    return report


def lambda_grid(examples: Sequence[LabeledExample], config: PipelineConfig, lams: Sequence[float],
                folds: int = 10, seed: int = 0) -> tuple[float, list[CrossValidationReport]]:
    """CV every lambda on the same folds; returns (lambda with lowest pooled RMSE, reports)."""
    reports = [
        cross_validate(examples, config.model_copy(update={"lam": lam}), folds, seed)
        for lam in lams
    ]
    best = min(range(len(reports)), key=lambda i: (reports[i].rmse, lams[i]))
    return lams[best], reports


# ============== QUERY POINT SWEEP ==============

@dataclass(frozen=True)
class PointResult:
    point: int
    tested: int
    excluded: int
    report: Optional[CrossValidationReport] = None
    skipped: str = ""


def query_point_sweep(dataset: Dataset, config: PipelineConfig = PipelineConfig(), folds: int = 10,
                      seed: int = 0, factors: Sequence[float] = DEFAULT_FACTORS) -> list[PointResult]:
    """
    One model per query point. Instances solved before a point have no
    snapshot there and are excluded (and counted) for that point.
    """
    results = []
    for point in dataset.windows():
        examples = dataset.at_window(point)
        excluded = dataset.excluded_at(point)
        if excluded:
            logger.info("point %d: %d instance(s) solved before the window closed", point, excluded)
        try:
            report = cross_validate(examples, config, folds, seed, factors)
        except (ClassTooSmallError, ModelError) as e:
            logger.warning("point %d skipped: %s", point, e)
            results.append(PointResult(point, len(examples), excluded, None, str(e)))
            continue
        results.append(PointResult(point, len(examples), excluded, report))
    return results


# ============== CHAINED RESTART EXPERIMENT ==============

@dataclass(frozen=True)
class ChainedRow:
    label: str
    restart: int
    tested: int
    plain_within: float
    chained_within: float
    factor: float = 2.0

    @property
    def difference(self) -> float:
        return self.chained_within - self.plain_within


def window_sequences(dataset: Dataset) -> dict[str, tuple[bool, float, list[FeatureVector]]]:
    """Per instance: (satisfiable, label, window vectors for ordinals 1..m)."""
    windows: dict[str, dict[int, LabeledExample]] = defaultdict(dict)
    for example in dataset.examples:
        windows[example.instance_id][example.window] = example
    sequences = {}
    for instance_id, by_window in windows.items():
        vectors = []
        r = 1
        while r in by_window:
            vectors.append(by_window[r].features)
            r += 1
        if vectors:
            first = by_window[1]
            sequences[instance_id] = (first.satisfiable, first.label, vectors)
    return sequences


def chained_restart_experiment(dataset: Dataset, config: PipelineConfig = PipelineConfig(),
                               folds: int = 10, seed: int = 0, factor: float = 2.0) -> list[ChainedRow]:
    """
    Paired comparison of x_r and chained x̂_r models per class and window
    ordinal r. Folds are dealt once on the r = 1 population and shared by
    both feature modes and all r.
    """
    sequences = window_sequences(dataset)
    rows = []
    for label in CLASSES:
        ids = [i for i, (sat, _, _) in sequences.items() if label == "all" or sat == (label == "sat")]
        if len(ids) < folds:
            logger.warning("chained experiment: %s class has %d instances, skipped", label, len(ids))
            continue
        try:
            assignment = stratified_folds([sequences[i][0] for i in ids], folds, seed)
        except ClassTooSmallError as e:
            logger.warning("chained experiment: %s class skipped: %s", label, e)
            continue
        plain_hits: dict[int, list[bool]] = defaultdict(list)
        chained_hits: dict[int, list[bool]] = defaultdict(list)
        for fold in range(folds):
            train_ids = [i for i, f in zip(ids, assignment) if f != fold]
            test_ids = [i for i, f in zip(ids, assignment) if f == fold]
            chained = train_chained([(sequences[i][2], sequences[i][1]) for i in train_ids],
                                    config, label=label)
            plain = []
            for r in range(1, len(chained) + 1):
                reached = [
                    LabeledExample(i, sequences[i][0], sequences[i][2][r - 1], sequences[i][1], window=r)
                    for i in train_ids if len(sequences[i][2]) >= r
                ]
                plain.append(train(reached, config, label=f"{label}@r{r}"))
            for i in test_ids:
                _, actual, vectors = sequences[i]
                upto = min(len(vectors), len(chained))
                chained_vectors = chained.chain(vectors[:upto])
                for r in range(1, upto + 1):
                    plain_hits[r].append(error_factor(predict(plain[r - 1], vectors[r - 1]), actual, factor))
                    chained_hits[r].append(
                        error_factor(predict(chained.models[r - 1], chained_vectors[r - 1]), actual, factor))
        for r in sorted(plain_hits):
            rows.append(ChainedRow(label, r, len(plain_hits[r]), float(np.mean(plain_hits[r])),
                                   float(np.mean(chained_hits[r])), factor))
    return rows


# ============== REPORTS ==============

def _frame(columns: Sequence[str], rows: Iterable[Sequence]) -> pd.DataFrame:
    frame = pd.DataFrame([tuple(row) for row in rows], columns=list(columns))
    flags = frame.select_dtypes(include="bool").columns
    return frame.astype({name: np.int64 for name in flags})


def write_table(path: str, columns: Sequence[str], rows: Iterable[Sequence], fingerprint: str) -> str:
    """Comma-separated table preceded by a '# fingerprint:' line."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# fingerprint: {fingerprint}\n")
        _frame(columns, rows).to_csv(f, index=False, float_format="%.6f", na_rep="nan", lineterminator="\n")
    return path


def write_gnuplot(path: str, columns: Sequence[str], rows: Iterable[Sequence], fingerprint: str) -> str:
    """Whitespace-separated data file for gnuplot's `plot ... using 1:2`."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# fingerprint: {fingerprint}\n")
        f.write("# " + " ".join(columns) + "\n")
        _frame(columns, rows).to_csv(f, sep=" ", header=False, index=False, float_format="%.6f",
                                     na_rep="nan", lineterminator="\n")
    return path


def write_text(path: str, lines: Sequence[str], fingerprint: str) -> str:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"fingerprint: {fingerprint}\n")
        for line in lines:
            f.write(line + "\n")
    return path


CURVE_COLUMNS = ("experiment", "method", "predictor", "class", "factor", "fraction", "count")
FOLD_COLUMNS = ("experiment", "method", "fold", "n_train", "n_test", "rmse", "baseline_rmse")


def cv_curve_rows(report: CrossValidationReport, experiment: str) -> list[tuple]:
    rows = []
    for predictor in ("lmp", "baseline"):
        for curve in report.curves(predictor):
            for factor, fraction in zip(curve.factors, curve.fractions):
                rows.append((experiment, report.method, predictor, curve.label, factor, fraction, curve.count))
    return rows


def cv_fold_rows(report: CrossValidationReport, experiment: str) -> list[tuple]:
    return [(experiment, report.method, m.fold, m.n_train, m.n_test, m.rmse, m.baseline_rmse)
            for m in report.folds]


def cv_summary(report: CrossValidationReport, experiment: str) -> list[str]:
    lines = [f"[{experiment}] method={report.method} lambda={report.lam:g} "
             f"tested={len(report.predictions)} rmse={report.rmse:.4f} baseline_rmse={report.baseline_rmse:.4f}"]
    for curve, base in zip(report.curves("lmp"), report.curves("baseline")):
        if 2.0 in curve.factors:
            lines.append(f"  {curve.label}: within factor 2 {curve.fraction_at(2.0):.3f} "
                         f"(baseline {base.fraction_at(2.0):.3f}, n={curve.count})")
    return lines


def write_cv_reports(out_dir: str, reports: Sequence[tuple[str, CrossValidationReport]],
                     fingerprint: str, gnuplot: bool = False, extra_summary: Sequence[str] = ()) -> list[str]:
    """reports: (experiment tag, report) pairs. Returns written paths."""
    os.makedirs(out_dir, exist_ok=True)
    curve_rows, fold_rows, summary = [], [], list(extra_summary)
    for tag, report in reports:
        curve_rows.extend(cv_curve_rows(report, tag))
        fold_rows.extend(cv_fold_rows(report, tag))
        summary.extend(cv_summary(report, tag))
    paths = [
        write_table(os.path.join(out_dir, "curves.csv"), CURVE_COLUMNS, curve_rows, fingerprint),
        write_table(os.path.join(out_dir, "folds.csv"), FOLD_COLUMNS, fold_rows, fingerprint),
        write_text(os.path.join(out_dir, "summary.txt"), summary, fingerprint),
    ]
    if gnuplot:
        for tag, report in reports:
            for predictor in ("lmp", "baseline"):
                for curve in report.curves(predictor):
                    name = f"{tag}_{report.method}_{predictor}_{curve.label}.dat"
                    finite = [(f, x) for f, x in zip(curve.factors, curve.fractions) if math.isfinite(f)]
                    paths.append(write_gnuplot(os.path.join(out_dir, name),
                                               ("error_factor", "fraction_within"), finite, fingerprint))
    return paths


def write_sweep_reports(out_dir: str, results: Sequence[PointResult], fingerprint: str,
                        gnuplot: bool = False) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    point_rows = [
        (r.point, r.tested, r.excluded,
         r.report.rmse if r.report else math.nan, r.report.baseline_rmse if r.report else math.nan,
         r.skipped)
        for r in results
    ]
    paths = [write_table(os.path.join(out_dir, "points.csv"),
                         ("point", "tested", "excluded", "rmse", "baseline_rmse", "skipped"),
                         point_rows, fingerprint)]
    summary = [f"point {r.point}: tested={r.tested} excluded={r.excluded}"
               + (f" skipped ({r.skipped})" if r.skipped else "") for r in results]
    done = [(f"point_{r.point}", r.report) for r in results if r.report is not None]
    paths.extend(write_cv_reports(out_dir, done, fingerprint, gnuplot, summary))
    return paths


CHAINED_COLUMNS = ("class", "restart", "tested", "plain_within", "chained_within", "difference", "factor")


def write_chained_reports(out_dir: str, rows: Sequence[ChainedRow], fingerprint: str,
                          gnuplot: bool = False) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    table = [(r.label, r.restart, r.tested, r.plain_within, r.chained_within, r.difference, r.factor)
             for r in rows]
    paths = [write_table(os.path.join(out_dir, "chained.csv"), CHAINED_COLUMNS, table, fingerprint)]
    summary = [f"{r.label} r={r.restart}: n={r.tested} plain={r.plain_within:.3f} "
               f"chained={r.chained_within:.3f} diff={r.difference:+.3f}" for r in rows]
    paths.append(write_text(os.path.join(out_dir, "summary.txt"), summary, fingerprint))
    if gnuplot:
        for label in sorted({r.label for r in rows}):
            data = [(r.restart, r.plain_within, r.chained_within) for r in rows if r.label == label]
            paths.append(write_gnuplot(os.path.join(out_dir, f"chained_{label}.dat"),
                                       ("restart", "plain_within", "chained_within"), data, fingerprint))
    return paths
