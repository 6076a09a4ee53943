"""
Feature vectors built from the original formula and a closed observation
window, chained predictions from earlier windows, and the labeled dataset
file format.

Dataset file: CSV preceded by '#' header lines

    # lmp-dataset v1
    # fingerprint: <probe fingerprint>
    # probe: <canonical probe settings>
    # chained: <number of chained entries>
    # instances: <instances probed>
    # budget_exhausted: <instances excluded for hitting the conflict budget>
    instance_id,window,satisfiable,log_conflicts,flags,<feature names...>

One row per (instance, window): the window is the query point in
no-restart mode and the window ordinal in restart mode. Floats are written
with the shortest round-trip repr so a write/read cycle is bit-exact.
"""


import logging
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np
import pandas as pd

from controllers.cnf import CnfFormula, FormulaStats, formula_stats
from controllers.errors import (
    DatasetError,
    DimensionMismatchError,
    FeatureError,
    FingerprintMismatchError,
    HeaderVersionError,
)
from controllers.probe import WindowSnapshot

logger = logging.getLogger(__name__)

DATASET_VERSION = "lmp-dataset v1"
FIXED_COLUMNS = ("instance_id", "window", "satisfiable", "log_conflicts", "flags")

INIT_FEATURES = (
    "init_var",
    "init_cls",
    "init_cls_per_var",
    "init_var_per_cls",
    "init_frac_binary",
    "init_frac_ternary",
    "init_avg_clause_size",
)

# Window statistics kept per series.
WINDOW_LAYOUT = (
    ("cls_per_var", ("min", "max", "mean", "sd", "last")),
    ("var_per_cls", ("min", "max", "mean", "sd", "last")),
    ("frac_binary", ("mean", "sd", "last")),
    ("frac_ternary", ("mean", "sd", "last")),
    ("avg_clause_size", ("mean", "sd", "last")),
    ("trail_depth", ("max", "mean", "sd")),
    ("decision_depth", ("max", "mean", "sd")),
    ("backjump_size", ("max", "mean", "sd")),
    ("learnt_size", ("min", "max", "mean", "sd")),
    ("conflict_size", ("min", "max", "mean", "sd")),
    ("abb", ("min", "max", "mean", "sd")),
    ("aab", ("min", "max", "mean", "sd")),
    ("aab_over_abb", ("min", "max", "mean", "sd")),
    ("abb_over_aab", ("min", "max", "mean", "sd")),
    ("log_wbe", ("min", "max", "mean", "sd", "last")),
)

WINDOW_FEATURES = tuple(
    f"win_{series}_{stat}" for series, stats in WINDOW_LAYOUT for stat in stats
)
BASE_FEATURES = INIT_FEATURES + WINDOW_FEATURES
NUM_BASE_FEATURES = 64


def chained_names(count: int) -> tuple[str, ...]:
    return tuple(f"chained_pred_{i}" for i in range(1, count + 1))


@dataclass(frozen=True)
class FeatureVector:
    values: tuple[float, ...]
    chained: tuple[float, ...] = ()
    flags: tuple[str, ...] = ()

    @property
    def names(self) -> tuple[str, ...]:
        return BASE_FEATURES + chained_names(len(self.chained))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values + self.chained, dtype=np.float64)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values + self.chained))

    def with_chained(self, chained: Sequence[float]) -> "FeatureVector":
        return FeatureVector(self.values, tuple(float(x) for x in chained), self.flags)


@dataclass(frozen=True)
class LabeledExample:
    instance_id: str
    satisfiable: bool
    features: FeatureVector
    label: float  # ln(total conflicts of the full run)
    window: int = 1


def log_cost(conflicts: int) -> float:
    """Label for a run cost; costs below one conflict count as one."""
    return math.log(max(conflicts, 1))


def build_features(formula: Union[CnfFormula, FormulaStats], snapshot: WindowSnapshot,
                   chained: Sequence[float] = ()) -> FeatureVector:
    """Init column from the original formula, window columns from the snapshot."""
    stats = formula_stats(formula) if isinstance(formula, CnfFormula) else formula
    flags = set(snapshot.flags)
    if stats.num_vars == 0 or stats.num_clauses == 0:
        flags.add("zero_division:init")

    values = [
        float(stats.num_vars),
        float(stats.num_clauses),
        stats.cls_per_var,
        stats.var_per_cls,
        stats.frac_binary,
        stats.frac_ternary,
        stats.avg_clause_size,
    ]
    for series, wanted in WINDOW_LAYOUT:
        summary = snapshot.series[series]
        values.extend(float(getattr(summary, stat)) for stat in wanted)

    chained = tuple(float(x) for x in chained)
    for name, value in zip(BASE_FEATURES + chained_names(len(chained)), tuple(values) + chained):
        if not math.isfinite(value):
            raise FeatureError(f"non-finite feature {name}={value} (window {snapshot.key})")
    return FeatureVector(tuple(values), chained, tuple(sorted(flags)))


# ============== DATASET FILES ==============

@dataclass(frozen=True)
class Dataset:
    fingerprint: str
    probe_description: str
    examples: tuple[LabeledExample, ...]
    instances: int = 0
    budget_exhausted: int = 0

    def windows(self) -> tuple[int, ...]:
        return tuple(sorted({example.window for example in self.examples}))

    def at_window(self, window: int) -> list[LabeledExample]:
        return [example for example in self.examples if example.window == window]

    def excluded_at(self, window: int) -> int:
        """Solved instances that finished before this window closed."""
        return self.instances - self.budget_exhausted - len(self.at_window(window))


def _check_dimensions(examples: Sequence[LabeledExample]) -> int:
    widths = {len(example.features.chained) for example in examples}
    if len(widths) > 1:
        raise DimensionMismatchError(f"mixed chained lengths in dataset: {sorted(widths)}")
    return widths.pop() if widths else 0


def dataset_write(path: str, dataset: Dataset) -> str:
    chained = _check_dimensions(dataset.examples)
    names = BASE_FEATURES + chained_names(chained)
    examples = dataset.examples
    fixed = pd.DataFrame({
        "instance_id": [e.instance_id for e in examples],
        "window": np.asarray([e.window for e in examples], dtype=np.int64),
        "satisfiable": np.asarray([int(e.satisfiable) for e in examples], dtype=np.int64),
        "log_conflicts": np.asarray([e.label for e in examples], dtype=np.float64),
        "flags": [";".join(e.features.flags) for e in examples],
    })
    values = np.asarray([e.features.values + e.features.chained for e in examples],
                        dtype=np.float64).reshape(len(examples), len(names))
    frame = pd.concat([fixed, pd.DataFrame(values, columns=list(names))], axis=1)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# {DATASET_VERSION}\n")
        f.write(f"# fingerprint: {dataset.fingerprint}\n")
        f.write(f"# probe: {dataset.probe_description}\n")
        f.write(f"# chained: {chained}\n")
        f.write(f"# instances: {dataset.instances}\n")
        f.write(f"# budget_exhausted: {dataset.budget_exhausted}\n")
        frame.to_csv(f, index=False, lineterminator="\n")
    logger.info("wrote %d examples to %s", len(examples), path)
    return path


def _header_int(header: dict[str, str], key: str, path: str) -> int:
    try:
        return int(header.get(key, "0"))
    except ValueError:
        raise DatasetError(f"{path}: bad '{key}' header value") from None


def _read_header(path: str) -> tuple[dict[str, str], int]:
    header: dict[str, str] = {}
    skip = 0
    with open(path, "r", encoding="utf-8", newline="") as f:
        for line in f:
            if not line.startswith("#"):
                break
            skip += 1
            text = line[1:].strip()
            if ":" in text:
                key, _, value = text.partition(":")
                header[key.strip()] = value.strip()
            else:
                header["version"] = text
    return header, skip


def _read_body(path: str, skip: int, columns: tuple[str, ...]) -> pd.DataFrame:
    dtypes = {"instance_id": str, "flags": str, "window": np.int64, "satisfiable": np.int64}
    numeric = columns[len(FIXED_COLUMNS):]
    dtypes.update({name: np.float64 for name in numeric})
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", pd.errors.ParserWarning)
            frame = pd.read_csv(path, skiprows=skip, dtype=dtypes, index_col=False,
                                keep_default_na=False, na_values={name: [""] for name in numeric},
                                float_precision="round_trip")
    except pd.errors.EmptyDataError:
        raise DatasetError(f"{path}: missing column header") from None
    except (pd.errors.ParserError, pd.errors.ParserWarning) as e:
        raise DimensionMismatchError(f"{path}: {' '.join(str(e).split())}") from None
    except ValueError as e:
        raise DatasetError(f"{path}: bad value: {e}") from None
    if tuple(frame.columns) != columns:
        raise DimensionMismatchError(f"{path}: columns do not match the feature layout")
    short = frame.isna().any(axis=1)
    if short.any():
        first = frame["instance_id"][short].iloc[0]
        raise DimensionMismatchError(f"{path}: row for {first!r} is missing columns")
    return frame


def dataset_read(path: str, expected_fingerprint: str = None) -> Dataset:
    header, skip = _read_header(path)
    if header.get("version") != DATASET_VERSION:
        raise HeaderVersionError(f"{path}: unknown dataset header {header.get('version')!r}")
    fingerprint = header.get("fingerprint", "")
    if expected_fingerprint is not None and fingerprint != expected_fingerprint:
        raise FingerprintMismatchError(
            f"{path}: dataset fingerprint {fingerprint} != expected {expected_fingerprint}")
    chained = _header_int(header, "chained", path)

    names = BASE_FEATURES + chained_names(chained)
    frame = _read_body(path, skip, FIXED_COLUMNS + names)
    values = frame.loc[:, list(names)].to_numpy(dtype=np.float64)
    width = len(BASE_FEATURES)
    examples = tuple(
        LabeledExample(
            instance_id=instance_id,
            window=window,
            satisfiable=satisfiable == 1,
            label=label,
            features=FeatureVector(tuple(row[:width]), tuple(row[width:]),
                                   tuple(x for x in flags.split(";") if x)),
        )
        for instance_id, window, satisfiable, label, flags, row in zip(
            frame["instance_id"].tolist(), frame["window"].tolist(), frame["satisfiable"].tolist(),
            frame["log_conflicts"].tolist(), frame["flags"].tolist(), values.tolist())
    )
    return Dataset(
        fingerprint=fingerprint,
        probe_description=header.get("probe", ""),
        examples=examples,
        instances=_header_int(header, "instances", path),
        budget_exhausted=_header_int(header, "budget_exhausted", path),
    )


def merge_datasets(datasets: Iterable[Dataset]) -> Dataset:
    """Concatenate datasets probed with the same settings; an (instance, window) row may occur once."""
    datasets = list(datasets)
    if not datasets:
        raise DatasetError("nothing to merge")
    fingerprint = datasets[0].fingerprint
    for dataset in datasets[1:]:
        if dataset.fingerprint != fingerprint:
            raise FingerprintMismatchError(
                f"cannot merge datasets with fingerprints {fingerprint} and {dataset.fingerprint}")
    examples = tuple(e for d in datasets for e in d.examples)
    seen = set()
    for example in examples:
        row = (example.instance_id, example.window)
        if row in seen:
            raise DatasetError(f"instance {example.instance_id} appears twice at window {example.window}")
        seen.add(row)
    _check_dimensions(examples)
    return Dataset(
        fingerprint=fingerprint,
        probe_description=datasets[0].probe_description,
        examples=examples,
        instances=sum(d.instances for d in datasets),
        budget_exhausted=sum(d.budget_exhausted for d in datasets),
    )


def design_matrix(examples: Sequence[LabeledExample]) -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
    """Stack examples into (X, y, names)."""
    if not examples:
        return np.zeros((0, len(BASE_FEATURES))), np.zeros(0), BASE_FEATURES
    _check_dimensions(examples)
    X = np.vstack([example.features.as_array() for example in examples])
    y = np.asarray([example.label for example in examples], dtype=np.float64)
    return X, y, examples[0].features.names
