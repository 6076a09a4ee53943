import logging
import math

import numpy as np
import pytest

from controllers.errors import FeatureNameMismatchError, SingularSystemError, TooFewExamplesError
from controllers.features import BASE_FEATURES, NUM_BASE_FEATURES, FeatureVector, LabeledExample
from controllers.model import (
    ClassModels,
    PipelineConfig,
    SplitMode,
    TrainedModel,
    aic_backward_eliminate,
    aic_value,
    combine_two_models,
    drop_collinear,
    predict,
    predict_array,
    ridge_fit,
    train,
    train_arrays,
    train_chained,
    train_class_models,
)


def standardize(X):
    return (X - X.mean(axis=0)) / X.std(axis=0)


def make_examples(rng, count, satisfiable=None):
    examples = []
    for i in range(count):
        values = rng.normal(size=NUM_BASE_FEATURES)
        label = 5.0 + 1.5 * values[0] - 0.8 * values[10] + rng.normal(scale=0.1)
        sat = bool(rng.integers(0, 2)) if satisfiable is None else satisfiable
        examples.append(LabeledExample(f"i{i}", sat, FeatureVector(tuple(float(v) for v in values)), float(label)))
    return examples


# ============== RIDGE ==============

def test_ridge_matches_closed_form_oracle():
    rng = np.random.Generator(np.random.PCG64(7))
    for _ in range(100):
        X = standardize(rng.normal(size=(20, 5)))
        y = rng.normal(size=20) * 3 + 1
        for lam in (0.01, 1.0, 100.0):
            Z = np.hstack([np.ones((20, 1)), X])
            D = np.diag([0.0] + [lam] * 5)
            oracle = np.linalg.solve(Z.T @ Z + D, Z.T @ y)
            np.testing.assert_allclose(ridge_fit(X, y, lam), oracle, rtol=0, atol=1e-8)


def test_ridge_exact_fit():
    x = np.linspace(-1, 1, 11).reshape(-1, 1)
    w = ridge_fit(x, 2 * x[:, 0], 0.0)
    assert w[0] == pytest.approx(0.0, abs=1e-12)
    assert w[1] == pytest.approx(2.0, abs=1e-12)


def test_ridge_infinite_penalty_limit():
    rng = np.random.Generator(np.random.PCG64(8))
    X = standardize(rng.normal(size=(30, 3)))
    y = rng.normal(size=30) + 4
    w = ridge_fit(X, y, 1e12)
    assert np.all(np.abs(w[1:]) < 1e-9)
    assert w[0] == pytest.approx(y.mean(), abs=1e-9)


def test_ridge_norm_non_increasing_in_lambda():
    rng = np.random.Generator(np.random.PCG64(9))
    for _ in range(20):
        X = standardize(rng.normal(size=(40, 6)))
        y = X @ rng.normal(size=6) + rng.normal(size=40)
        norms = [np.linalg.norm(ridge_fit(X, y, lam)[1:]) for lam in (0.0, 0.01, 0.1, 1, 10, 100, 1000)]
        assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))


def test_ridge_errors():
    with pytest.raises(TooFewExamplesError):
        ridge_fit(np.ones((1, 2)), np.ones(1), 1.0)
    X = np.hstack([np.linspace(0, 1, 10).reshape(-1, 1), np.zeros((10, 1))])
    with pytest.raises(SingularSystemError):
        ridge_fit(X, np.arange(10.0), 0.0)


# ============== FEATURE SELECTION ==============

def test_aic_value():
    assert aic_value(100, 100.0, 3) == 8.0
    assert aic_value(100, 100.0, 3, penalty=math.log(100)) == pytest.approx(4 * math.log(100))


def test_drop_collinear_duplicated_column():
    rng = np.random.Generator(np.random.PCG64(10))
    a, b = rng.normal(size=50), rng.normal(size=50)
    X, names, dropped = drop_collinear(np.column_stack([a, b, a]), ["a", "b", "c"], 0.98)
    assert names == ["a", "b"]
    assert dropped == [("c", "collinear")]
    assert X.shape == (50, 2)


def test_drop_collinear_independent_columns_survive():
    rng = np.random.Generator(np.random.PCG64(11))
    X, names, dropped = drop_collinear(rng.normal(size=(1000, 8)), [f"f{i}" for i in range(8)], 0.98)
    assert dropped == [] and len(names) == 8


def test_drop_collinear_zero_variance_first():
    rng = np.random.Generator(np.random.PCG64(12))
    a = rng.normal(size=20)
    _, names, dropped = drop_collinear(np.column_stack([np.ones(20), a, -a]), ["k", "a", "neg"], 0.98)
    assert names == ["a"]
    assert dropped == [("k", "zero-variance"), ("neg", "collinear")]


def test_reciprocal_ratio_columns_flagged_on_narrow_ensembles():
    ratio = np.linspace(4.2, 4.3, 200)
    X = standardize(np.column_stack([ratio, 1 / ratio]))
    r = np.corrcoef(X, rowvar=False)[0, 1]
    xc, yc = X[:, 0] - X[:, 0].mean(), X[:, 1] - X[:, 1].mean()
    two_pass = (xc @ yc) / math.sqrt((xc @ xc) * (yc @ yc))
    assert r == pytest.approx(two_pass, abs=1e-12)
    _, names, dropped = drop_collinear(X, ["init_cls_per_var", "init_var_per_cls"], 0.98)
    assert names == ["init_cls_per_var"] and dropped == [("init_var_per_cls", "collinear")]


def _synthetic_selection(seed, penalty=2.0):
    rng = np.random.Generator(np.random.PCG64(seed))
    X = rng.normal(size=(200, 6))
    y = 3 * X[:, 0] + rng.normal(scale=0.1, size=200)
    names = ["x1"] + [f"noise{i}" for i in range(1, 6)]
    selected, _, _ = aic_backward_eliminate(standardize(X), y, 1.0, names, penalty)
    return selected


def test_aic_keeps_signal_and_sheds_noise():
    trials = [_synthetic_selection(seed) for seed in range(100)]
    assert all("x1" in selected for selected in trials)
    noise_kept = [len(selected) - 1 for selected in trials]
    assert np.mean(noise_kept) <= 1.2
    assert sum(k == 0 for k in noise_kept) >= 25


def test_heavier_penalty_sheds_more_noise():
    trials = [_synthetic_selection(seed, penalty=math.log(200)) for seed in range(100)]
    assert all("x1" in selected for selected in trials)
    assert sum(selected == ["x1"] for selected in trials) >= 80


def test_single_feature_at_most_one_step():
    rng = np.random.Generator(np.random.PCG64(13))
    X = standardize(rng.normal(size=(50, 1)))
    _, _, dropped = aic_backward_eliminate(X, rng.normal(size=50), 1.0, ["only"])
    assert len(dropped) <= 1


def test_elimination_is_deterministic():
    assert _synthetic_selection(5) == _synthetic_selection(5)


def test_all_features_eliminated_warns(caplog):
    rng = np.random.Generator(np.random.PCG64(14))
    X = standardize(rng.normal(size=(100, 3)))
    with caplog.at_level(logging.WARNING, logger="controllers.model"):
        selected, weights, _ = aic_backward_eliminate(X, np.full(100, 2.0) + 1e-9 * rng.normal(size=100),
                                                      1.0, ["a", "b", "c"], penalty=50.0)
    assert selected == []
    assert len(weights) == 1
    assert "intercept-only" in caplog.text


# ============== TRAINING AND PREDICTION ==============

def test_constant_label_predicts_the_constant():
    rng = np.random.Generator(np.random.PCG64(15))
    X = rng.normal(size=(40, 5))
    model = train_arrays(X, np.full(40, 7.25), [f"f{i}" for i in range(5)], PipelineConfig())
    np.testing.assert_allclose(predict_array(model, rng.normal(size=(10, 5)) * 100), 7.25, atol=1e-6)


def test_exact_linear_data_is_recovered():
    rng = np.random.Generator(np.random.PCG64(16))
    X = rng.normal(size=(100, 4)) * [1, 10, 0.1, 3]
    y = 1 + X @ np.array([2.0, -1.0, 0.5, 3.0])
    model = train_arrays(X, y, ["a", "b", "c", "d"], PipelineConfig(lam=1e-6))
    assert set(model.selected) == {"a", "b", "c", "d"}
    np.testing.assert_allclose(predict_array(model, X), y, atol=1e-3)


def test_too_few_examples():
    rng = np.random.Generator(np.random.PCG64(17))
    with pytest.raises(TooFewExamplesError):
        train(make_examples(rng, 9))


def test_training_cap():
    rng = np.random.Generator(np.random.PCG64(18))
    assert train(make_examples(rng, 600), PipelineConfig(max_train=500)).n_train == 500


def test_model_persistence_is_bit_exact(tmp_path):
    rng = np.random.Generator(np.random.PCG64(19))
    model = train(make_examples(rng, 120), fingerprint="fp")
    path = model.save(str(tmp_path / "m.json"))
    loaded = TrainedModel.load(path)
    assert loaded == model
    queries = [e.features for e in make_examples(rng, 100)]
    assert [predict(loaded, q) for q in queries] == [predict(model, q) for q in queries]


def test_raw_weights_reproduce_predictions():
    rng = np.random.Generator(np.random.PCG64(20))
    model = train(make_examples(rng, 150))
    intercept, weights = model.raw_weights()
    for example in make_examples(rng, 20):
        f = example.features.as_dict()
        raw = intercept + sum(w * f[name] for name, w in weights.items())
        assert raw == pytest.approx(predict(model, example.features), abs=1e-10)


def test_signal_features_survive_selection():
    rng = np.random.Generator(np.random.PCG64(21))
    model = train(make_examples(rng, 300))
    assert {BASE_FEATURES[0], BASE_FEATURES[10]} <= set(model.selected)


def test_feature_name_mismatch():
    rng = np.random.Generator(np.random.PCG64(22))
    model = train(make_examples(rng, 50))
    query = make_examples(rng, 1)[0].features.with_chained([1.0])
    with pytest.raises(FeatureNameMismatchError):
        predict(model, query)
    with pytest.raises(FeatureNameMismatchError):
        predict_array(model, np.zeros((1, 3)))


def test_combine_two_models():
    assert combine_two_models(math.log(100), math.log(400)) == pytest.approx(math.log(200), rel=1e-12)
    rng = np.random.Generator(np.random.PCG64(23))
    for a, b in rng.uniform(-50, 50, size=(100, 2)):
        assert combine_two_models(a, b) == combine_two_models(b, a)
        assert combine_two_models(a, a) == a


# ============== CLASS MODELS ==============

def test_class_models_oracle_and_fallback(caplog, tmp_path):
    rng = np.random.Generator(np.random.PCG64(24))
    examples = make_examples(rng, 30, satisfiable=True) + make_examples(rng, 5, satisfiable=False)
    bundle = train_class_models(examples, PipelineConfig(split=SplitMode.ORACLE), fingerprint="fp", window=2000)
    assert bundle.sat is not None and bundle.unsat is None and bundle.single is None
    query = examples[0].features
    with caplog.at_level(logging.WARNING, logger="controllers.model"):
        assert bundle.predict(query, SplitMode.ORACLE, satisfiable=False) == predict(bundle.sat, query)
    assert "unsat model unavailable" in caplog.text
    loaded = ClassModels.load(bundle.save(str(tmp_path / "bundle.json")))
    assert loaded == bundle and loaded.window == 2000


def test_class_models_two_models_mode():
    rng = np.random.Generator(np.random.PCG64(25))
    examples = make_examples(rng, 40, satisfiable=True) + make_examples(rng, 40, satisfiable=False)
    bundle = train_class_models(examples, PipelineConfig(split=SplitMode.TWO_MODELS))
    query = examples[3].features
    expected = combine_two_models(predict(bundle.sat, query), predict(bundle.unsat, query))
    assert bundle.predict(query, SplitMode.TWO_MODELS) == expected
    with pytest.raises(ValueError):
        bundle.predict(query, SplitMode.ORACLE)


def test_class_models_single_mode():
    rng = np.random.Generator(np.random.PCG64(26))
    bundle = train_class_models(make_examples(rng, 40), PipelineConfig(split=SplitMode.SINGLE))
    assert bundle.single is not None and bundle.sat is None
    assert bundle.single.n_train == 40


# ============== CHAINED MODELS ==============

def test_chained_models_grow_one_entry_per_window():
    rng = np.random.Generator(np.random.PCG64(27))
    sequences = []
    for i in range(40):
        windows = [FeatureVector(tuple(float(v) for v in rng.normal(size=NUM_BASE_FEATURES))) for _ in range(3)]
        sequences.append((windows, float(4 + windows[0].values[0] + rng.normal(scale=0.1))))
    # only a handful reach a fourth window
    for windows, y in sequences[:5]:
        windows.append(FeatureVector(tuple(float(v) for v in rng.normal(size=NUM_BASE_FEATURES))))

    chained = train_chained(sequences)
    assert len(chained) == 3
    for r, model in enumerate(chained.models, start=1):
        assert len(model.feature_names) == NUM_BASE_FEATURES + r - 1
    vectors = chained.chain(sequences[0][0][:3])
    assert [len(v.chained) for v in vectors] == [0, 1, 2]
    assert vectors[0].names == BASE_FEATURES
    assert math.isfinite(chained.predict(sequences[0][0][:3]))
    with pytest.raises(TooFewExamplesError):
        chained.chain(sequences[0][0][:4] + sequences[0][0][:1])
