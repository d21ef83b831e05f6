"""Feature extraction and random-forest tests."""

import numpy as np
import pytest

from ppgaf import baseline, dsp
from ppgaf.errors import ConfigError


# ---------------------------------------------------------------------------
# features


def test_zero_crossings_alternating():
    x = np.tile([1.0, -1.0], 400)
    fv = baseline.extract_features(x)
    assert fv.zero_crossings == x.size - 1


def test_hjorth_mobility_of_sine():
    fs = 32.0
    for freq in (1.0, 2.0, 4.0):
        t = np.arange(800) / fs
        x = np.sin(2 * np.pi * freq * t)
        fv = baseline.extract_features(x, fs)
        expected = 2.0 * np.sin(np.pi * freq / fs)
        assert abs(fv.hjorth_mobility - expected) < 0.01 * expected


def test_kurtosis_of_standard_normal():
    x = np.random.default_rng(0).standard_normal(100000)
    fv = baseline.extract_features(x)
    assert abs(fv.kurtosis) < 0.05


def test_constant_window_degenerates_to_zero():
    fv = baseline.extract_features(np.full(800, 0.5))
    assert fv.kurtosis == 0.0
    assert fv.skew == 0.0
    assert fv.hjorth_mobility == 0.0
    assert fv.hjorth_complexity == 0.0
    assert fv.nrmssd == 0.0
    assert fv.zero_crossings == 0.0


def test_features_all_finite_and_signed_correctly():
    rng = np.random.default_rng(7)
    x = dsp.normalize01(rng.standard_normal(800))
    fv = baseline.extract_features(x)
    arr = fv.as_array()
    assert np.all(np.isfinite(arr))
    assert fv.spectral_entropy >= 0
    assert fv.shannon_entropy >= 0
    assert fv.hjorth_mobility >= 0
    assert fv.hjorth_complexity >= 0
    assert fv.zero_crossings >= 0


def test_features_invariant_to_rescaling_through_normalization():
    rng = np.random.default_rng(9)
    raw = rng.standard_normal(800)
    a = baseline.extract_features(dsp.normalize01(raw))
    b = baseline.extract_features(dsp.normalize01(2.0 * raw))
    assert np.allclose(a.as_array(), b.as_array(), atol=1e-9)


def test_nrmssd_zero_with_few_peaks():
    x = np.zeros(800)
    x[400] = 1.0  # single spike: one peak only
    fv = baseline.extract_features(x)
    assert fv.nrmssd == 0.0


# ---------------------------------------------------------------------------
# forest


def separable_data(n=200, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 8))
    y = (X[:, 0] > 0).astype(np.int64)
    X[:, 0] += np.where(y == 1, 3.0, -3.0)  # wide margin
    return X, y


def test_single_class_data_predicts_that_class():
    X = np.random.default_rng(1).standard_normal((50, 8))
    Y = np.column_stack([np.ones(50, dtype=np.int64), np.full(50, 2, dtype=np.int64)])
    forest = baseline.fit_forest(X, Y, n_estimators=5, seed=1)
    rp, qp = forest.predict_proba(X)
    assert np.all(rp[:, 1] == 1.0)
    assert np.all(qp[:, 2] == 1.0)


def test_separable_data_training_accuracy_one():
    X, y = separable_data()
    Y = np.column_stack([y, np.zeros_like(y)])
    forest = baseline.fit_forest(X, Y, n_estimators=25, seed=1)
    rp, _ = forest.predict_proba(X)
    assert np.all((rp[:, 1] > 0.5) == (y == 1))


def test_forest_deterministic():
    X, y = separable_data(seed=3)
    Y = np.column_stack([y, y])
    probe = np.random.default_rng(4).standard_normal((37, 8))
    a = baseline.fit_forest(X, Y, n_estimators=10, seed=2).predict_proba(probe)
    b = baseline.fit_forest(X, Y, n_estimators=10, seed=2).predict_proba(probe)
    assert np.array_equal(a[0], b[0])
    assert np.array_equal(a[1], b[1])


def test_single_tree_pure_leaf_probabilities():
    X, y = separable_data(n=60, seed=5)
    tree = baseline.DecisionTree(n_classes=2, max_features=8)
    tree.fit(X, y, np.random.default_rng(0))
    probs = tree.predict_proba(X)
    assert np.array_equal(np.unique(probs), np.array([0.0, 1.0]))  # grown to purity
    assert np.all(probs.argmax(axis=1) == y)


def test_probabilities_sum_to_one():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((80, 8))
    Y = np.column_stack([rng.integers(0, 2, 80), rng.integers(0, 3, 80)])
    forest = baseline.fit_forest(X, Y, n_estimators=15, seed=3)
    rp, qp = forest.predict_proba(rng.standard_normal((20, 8)))
    assert np.allclose(rp.sum(axis=1), 1.0, atol=1e-9)
    assert np.allclose(qp.sum(axis=1), 1.0, atol=1e-9)


def test_predict_forest_single_row():
    X, y = separable_data(n=40, seed=8)
    Y = np.column_stack([y, np.zeros_like(y)])
    forest = baseline.fit_forest(X, Y, n_estimators=5, seed=1)
    rp, qp = baseline.predict_forest(forest, X[0])
    assert rp.shape == (2,)
    assert qp.shape == (3,)
    assert abs(rp.sum() - 1.0) < 1e-9


def test_more_trees_do_not_hurt_majority_accuracy():
    # soft property, aggregated over 5 seeds
    deltas = []
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        X = rng.standard_normal((120, 8))
        y = ((X[:, 0] + 0.3 * rng.standard_normal(120)) > 0).astype(np.int64)
        Y = np.column_stack([y, np.zeros_like(y)])
        accs = []
        for n in (1, 100):
            forest = baseline.fit_forest(X, Y, n_estimators=n, seed=seed)
            rp, _ = forest.predict_proba(X)
            accs.append(np.mean((rp[:, 1] >= 0.5) == (y == 1)))
        deltas.append(accs[1] - accs[0])
    assert np.mean(deltas) >= 0.0


def test_empty_training_set_rejected():
    with pytest.raises(ConfigError):
        baseline.fit_forest(np.zeros((0, 8)), np.zeros((0, 2), dtype=np.int64))
    with pytest.raises(ConfigError):
        baseline.fit_forest(np.zeros((1, 8)), np.zeros((1, 2), dtype=np.int64))
