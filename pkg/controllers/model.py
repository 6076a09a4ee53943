"""
Linear cost model: ridge regression on standardized features, collinearity
pruning and AIC backward elimination, persisted as JSON.

All predictions are natural-log conflict counts.
"""

import enum
import logging
import math
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from controllers.errors import (
    FeatureNameMismatchError,
    HeaderVersionError,
    SingularSystemError,
    TooFewExamplesError,
)
from controllers.features import FeatureVector, LabeledExample, design_matrix

logger = logging.getLogger(__name__)

MODEL_SCHEMA_VERSION = 1
MIN_TRAIN_EXAMPLES = 10
# RSS floor so a perfect fit still has a finite AIC
RSS_FLOOR = 1e-300


class SplitMode(str, enum.Enum):
    SINGLE = "single"  # one model for sat and unsat together
    ORACLE = "oracle"  # class model chosen by the known label
    TWO_MODELS = "two_models"  # geometric mean of both class models


class PipelineConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    lam: float = Field(default=1.0, ge=0, description="Ridge penalty on standardized features")
    collinear_threshold: float = Field(default=0.98, gt=0, le=1)
    max_train: int = Field(default=500, ge=MIN_TRAIN_EXAMPLES, description="Training-set cap")
    aic_penalty: float = Field(default=2.0, ge=0, description="AIC cost per parameter")
    split: SplitMode = SplitMode.ORACLE
    seed: int = Field(default=0, ge=0, description="Seed for subsampling above the cap")


# ============== REGRESSION PRIMITIVES ==============

def ridge_fit(X: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """
    Minimize ||y - b - Xw||^2 + lam * ||w||^2 with the intercept b unpenalized.

    Solved through the normal equations with a Cholesky factorization.
    Returns [b, w_1, ..., w_k].
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise TooFewExamplesError(f"ridge fit needs at least 2 rows, got {n}")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    Z = np.hstack([np.ones((n, 1)), X])
    A = Z.T @ Z
    penalty = np.full(Z.shape[1], lam)
    penalty[0] = 0.0
    A[np.diag_indices_from(A)] += penalty
    try:
        factor = cho_factor(A, lower=True, check_finite=True)
    except LinAlgError:
        raise SingularSystemError(
            f"normal equations are singular at lambda={lam}; use lambda > 0") from None
    weights = cho_solve(factor, Z.T @ y)
    if not np.all(np.isfinite(weights)):
        raise SingularSystemError(f"non-finite ridge solution at lambda={lam}")
    return weights


def residual_sum_of_squares(X: np.ndarray, y: np.ndarray, weights: np.ndarray) -> float:
    residual = y - (weights[0] + X @ weights[1:])
    return float(residual @ residual)


def aic_value(n: int, rss: float, k: int, penalty: float = 2.0) -> float:
    """Gaussian AIC: n*ln(RSS/n) + penalty*(k+1), k = non-intercept features."""
    return n * math.log(max(rss, RSS_FLOOR) / n) + penalty * (k + 1)


def drop_collinear(X: np.ndarray, names: Sequence[str], threshold: float = 0.98):
    """
    Greedy collinearity pass in column order. Zero-variance columns go first;
    then for every surviving pair with |r| >= threshold the later column is dropped.

    Returns (reduced X, kept names, dropped [(name, reason)]).
    """
    X = np.asarray(X, dtype=np.float64)
    names = list(names)
    dropped = []
    keep = []
    for j, name in enumerate(names):
        if np.ptp(X[:, j]) == 0:
            dropped.append((name, "zero-variance"))
        else:
            keep.append(j)

    if len(keep) > 1:
        corr = np.corrcoef(X[:, keep], rowvar=False)
    else:
        corr = np.ones((len(keep), len(keep)))
    alive = [True] * len(keep)
    for a in range(len(keep)):
        if not alive[a]:
            continue
        for b in range(a + 1, len(keep)):
            if alive[b] and abs(corr[a, b]) >= threshold:
                alive[b] = False
                dropped.append((names[keep[b]], "collinear"))

    kept = [j for j, ok in zip(keep, alive) if ok]
    return X[:, kept], [names[j] for j in kept], dropped


def _intercept_only(y: np.ndarray) -> np.ndarray:
    return np.array([float(np.mean(y))])


def aic_backward_eliminate(X: np.ndarray, y: np.ndarray, lam: float, names: Sequence[str],
                           penalty: float = 2.0):
    """
    Remove the feature with the smallest |standardized weight| while AIC does
    not increase; the first removal that raises AIC is rolled back.

    Returns (selected names, weights, dropped [(name, "aic")]).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    columns = list(range(X.shape[1]))
    names = list(names)
    dropped = []

    def fit(cols):
        if not cols:
            w = _intercept_only(y)
            return w, aic_value(n, float(((y - w[0]) ** 2).sum()), 0, penalty)
        w = ridge_fit(X[:, cols], y, lam)
        return w, aic_value(n, residual_sum_of_squares(X[:, cols], y, w), len(cols), penalty)

    weights, aic = fit(columns)
    while columns:
        magnitude = np.abs(weights[1:])
        # smallest magnitude, ties broken by feature name
        victim = min(range(len(columns)), key=lambda i: (magnitude[i], names[columns[i]]))
        trial = columns[:victim] + columns[victim + 1:]
        trial_weights, trial_aic = fit(trial)
        if trial_aic > aic:
            break
        dropped.append((names[columns[victim]], "aic"))
        columns, weights, aic = trial, trial_weights, trial_aic

    if not columns:
        logger.warning("all features eliminated; falling back to an intercept-only model")
    return [names[c] for c in columns], weights, dropped


# ============== TRAINED MODEL ==============

class TrainedModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    schema_version: int = MODEL_SCHEMA_VERSION
    feature_names: tuple[str, ...]
    selected: tuple[str, ...]
    means: tuple[float, ...]
    sds: tuple[float, ...]
    weights: tuple[float, ...]  # intercept first
    lam: float
    n_train: int
    dropped: tuple[tuple[str, str], ...] = ()
    label: str = "all"
    fingerprint: str = ""

    def selected_indices(self) -> list[int]:
        position = {name: i for i, name in enumerate(self.feature_names)}
        return [position[name] for name in self.selected]

    def raw_weights(self) -> tuple[float, dict[str, float]]:
        """Weights re-expressed on raw (unstandardized) features: (intercept, {name: weight})."""
        w = np.asarray(self.weights[1:])
        sds = np.asarray(self.sds)
        means = np.asarray(self.means)
        raw = w / sds if len(w) else w
        intercept = self.weights[0] - float(raw @ means) if len(w) else self.weights[0]
        return float(intercept), {name: float(v) for name, v in zip(self.selected, raw)}

    def save(self, path: str) -> str:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.model_dump_json(indent=2))
            f.write("\n")
        return path

    @classmethod
    def load(cls, path: str) -> "TrainedModel":
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
        model = cls.model_validate_json(text)
        if model.schema_version != MODEL_SCHEMA_VERSION:
            raise HeaderVersionError(f"{path}: unsupported model schema {model.schema_version}")
        return model


def _subsample(n: int, cap: int, seed: int) -> np.ndarray:
    if n <= cap:
        return np.arange(n)
    rng = np.random.Generator(np.random.PCG64(seed))
    logger.info("training set capped at %d of %d examples", cap, n)
    return np.sort(rng.choice(n, size=cap, replace=False))


def train_arrays(X: np.ndarray, y: np.ndarray, names: Sequence[str], config: PipelineConfig,
                 label: str = "all", fingerprint: str = "") -> TrainedModel:
    names = list(names)
    if X.shape[0] < MIN_TRAIN_EXAMPLES:
        raise TooFewExamplesError(
            f"need at least {MIN_TRAIN_EXAMPLES} examples to train, got {X.shape[0]}")
    rows = _subsample(X.shape[0], config.max_train, config.seed)
    X = np.asarray(X, dtype=np.float64)[rows]
    y = np.asarray(y, dtype=np.float64)[rows]

    constant = np.ptp(X, axis=0) == 0
    dropped = [(names[j], "zero-variance") for j in np.flatnonzero(constant)]
    live = [int(j) for j in np.flatnonzero(~constant)]
    means = X[:, live].mean(axis=0)
    sds = X[:, live].std(axis=0)
    Z = (X[:, live] - means) / sds
    live_names = [names[j] for j in live]

    Z, kept_names, collinear = drop_collinear(Z, live_names, config.collinear_threshold)
    dropped.extend(collinear)
    selected, weights, eliminated = aic_backward_eliminate(
        Z, y, config.lam, kept_names, config.aic_penalty)
    dropped.extend(eliminated)

    index = {name: i for i, name in enumerate(live_names)}
    chosen = [index[name] for name in selected]
    return TrainedModel(
        feature_names=tuple(names),
        selected=tuple(selected),
        means=tuple(float(means[i]) for i in chosen),
        sds=tuple(float(sds[i]) for i in chosen),
        weights=tuple(float(w) for w in weights),
        lam=config.lam,
        n_train=len(y),
        dropped=tuple(dropped),
        label=label,
        fingerprint=fingerprint,
    )


def train(examples: Sequence[LabeledExample], config: PipelineConfig = PipelineConfig(),
          label: str = "all", fingerprint: str = "") -> TrainedModel:
    """zero-variance -> standardize -> collinear -> AIC -> final ridge fit."""
    X, y, names = design_matrix(examples)
    model = train_arrays(X, y, names, config, label=label, fingerprint=fingerprint)
    logger.info("trained %s model on %d examples: %d of %d features kept",
                label, model.n_train, len(model.selected), len(names))
    return model


def predict_array(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    """Row-wise predictions for a matrix laid out in model.feature_names order."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != len(model.feature_names):
        raise FeatureNameMismatchError(
            f"model expects {len(model.feature_names)} features, got {X.shape[1]}")
    w = np.asarray(model.weights)
    if not model.selected:
        return np.full(X.shape[0], w[0])
    Z = (X[:, model.selected_indices()] - np.asarray(model.means)) / np.asarray(model.sds)
    return w[0] + Z @ w[1:]


def predict(model: TrainedModel, features: FeatureVector) -> float:
    if features.names != model.feature_names:
        raise FeatureNameMismatchError(
            f"feature names differ from the {model.label} model's training layout")
    return float(predict_array(model, features.as_array())[0])


def combine_two_models(pred_sat: float, pred_unsat: float) -> float:
    """Geometric mean in conflict space."""
    return (pred_sat + pred_unsat) / 2


# ============== CLASS-SPLIT AND CHAINED MODELS ==============

class ClassModels(BaseModel):
    """
    The single model or the per-class sat/unsat models of one probe
    configuration and window; this is what a model file holds.
    """
    model_config = ConfigDict(frozen=True)

    schema_version: int = MODEL_SCHEMA_VERSION
    fingerprint: str = ""
    window: int = 1
    split: SplitMode = SplitMode.ORACLE
    single: Optional[TrainedModel] = None
    sat: Optional[TrainedModel] = None
    unsat: Optional[TrainedModel] = None

    def save(self, path: str) -> str:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.model_dump_json(indent=2))
            f.write("\n")
        return path

    @classmethod
    def load(cls, path: str) -> "ClassModels":
        with open(path, "r", encoding="utf-8") as f:
            bundle = cls.model_validate_json(f.read())
        if bundle.schema_version != MODEL_SCHEMA_VERSION:
            raise HeaderVersionError(f"{path}: unsupported model schema {bundle.schema_version}")
        return bundle

    def _class_model(self, satisfiable: bool) -> TrainedModel:
        wanted, other = (self.sat, self.unsat) if satisfiable else (self.unsat, self.sat)
        if wanted is not None:
            return wanted
        fallback = other if other is not None else self.single
        if fallback is None:
            raise TooFewExamplesError("no trained model available")
        logger.warning("%s model unavailable; using the %s model",
                       "sat" if satisfiable else "unsat", fallback.label)
        return fallback

    def predict(self, features: FeatureVector, mode: SplitMode,
                satisfiable: Optional[bool] = None) -> float:
        if mode is SplitMode.SINGLE:
            if self.single is None:
                raise TooFewExamplesError("no single model trained")
            return predict(self.single, features)
        if mode is SplitMode.ORACLE:
            if satisfiable is None:
                raise ValueError("oracle mode needs the satisfiability label")
            return predict(self._class_model(satisfiable), features)
        return combine_two_models(predict(self._class_model(True), features),
                                  predict(self._class_model(False), features))


def _train_or_none(examples, config, label, fingerprint) -> Optional[TrainedModel]:
    if len(examples) < MIN_TRAIN_EXAMPLES:
        logger.warning("only %d %s examples; no %s model trained", len(examples), label, label)
        return None
    return train(examples, config, label=label, fingerprint=fingerprint)


def train_class_models(examples: Sequence[LabeledExample], config: PipelineConfig = PipelineConfig(),
                       fingerprint: str = "", window: int = 1) -> ClassModels:
    """Single mode trains one model on everything; the split modes train sat and unsat models."""
    if config.split is SplitMode.SINGLE:
        return ClassModels(fingerprint=fingerprint, window=window, split=config.split,
                           single=_train_or_none(list(examples), config, "all", fingerprint))
    return ClassModels(
        fingerprint=fingerprint,
        window=window,
        split=config.split,
        sat=_train_or_none([e for e in examples if e.satisfiable], config, "sat", fingerprint),
        unsat=_train_or_none([e for e in examples if not e.satisfiable], config, "unsat", fingerprint),
    )


class ChainedModels:
    """
    One frozen model per window ordinal r, each trained on x_r plus the
    predictions of models 1..r-1.
    """

    def __init__(self, models: Sequence[TrainedModel] = ()):
        self.models = list(models)

    def __len__(self) -> int:
        return len(self.models)

    def chain(self, windows: Sequence[FeatureVector]) -> list[FeatureVector]:
        """Chained vectors for consecutive windows 1..len(windows); needs models for 1..len-1."""
        if len(windows) > len(self.models) + 1:
            raise TooFewExamplesError(
                f"{len(windows)} windows but only {len(self.models)} chained models")
        chained: list[FeatureVector] = []
        predictions: list[float] = []
        for r, window in enumerate(windows, start=1):
            vector = window.with_chained(predictions)
            chained.append(vector)
            if r < len(windows):
                predictions.append(predict(self.models[r - 1], vector))
        return chained

    def predict(self, windows: Sequence[FeatureVector]) -> float:
        """Prediction at the last given window."""
        last = self.chain(windows)[-1]
        return predict(self.models[len(windows) - 1], last)


def train_chained(sequences: Sequence[tuple[Sequence[FeatureVector], float]],
                  config: PipelineConfig = PipelineConfig(), max_windows: int = 0,
                  label: str = "all") -> ChainedModels:
    """
    sequences: per instance, its window vectors (ordinals 1, 2, ...) and its label.
    Models are trained for r = 1, 2, ... while at least MIN_TRAIN_EXAMPLES
    instances reached window r; earlier models are frozen first.
    """
    chained = ChainedModels()
    r = 1
    while not max_windows or r <= max_windows:
        reached = [(windows[:r], y) for windows, y in sequences if len(windows) >= r]
        if len(reached) < MIN_TRAIN_EXAMPLES:
            break
        examples = [
            LabeledExample(str(i), True, chained.chain(windows)[-1], y)
            for i, (windows, y) in enumerate(reached)
        ]
        chained.models.append(train(examples, config, label=f"{label}@r{r}"))
        r += 1
    return chained
