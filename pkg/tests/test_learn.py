import json
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cxrscore.errors import InvalidInputError, SchemaError
from cxrscore.learn import (
    LogisticFitter,
    SeverityModel,
    TreeFitter,
    confusion,
    fit_logistic,
    fit_standardizer,
    fit_tree,
    leave_two_out_cv,
    score,
    train_severity_model,
)
from cxrscore.learn.logistic import penalized_gradient, penalized_loglik

import oracles


def central_diff(f, theta, h=1e-5):
    g = np.zeros_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        g[k] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


def random_problem(rng, n=None, d=None):
    n = n or int(rng.integers(5, 51))
    d = d or int(rng.integers(1, 11))
    X = rng.normal(size=(n, d))
    y = (rng.random(n) < 0.5).astype(float)
    y[0], y[1] = 0, 1
    return X, y


# --- standardizer -----------------------------------------------------------

def test_standardizer_basic():
    s = fit_standardizer(np.array([[1.0], [3.0]]))
    assert s.mean[0] == 2.0 and s.std[0] == 1.0


def test_standardizer_constant_column():
    X = np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 4.0]])
    s = fit_standardizer(X)
    assert s.std[0] == 1e-12
    assert np.all(s.transform(X)[:, 0] == 0.0)


def test_standardizer_round_trip():
    X = np.random.default_rng(0).normal(3, 7, size=(30, 4))
    s = fit_standardizer(X)
    assert np.max(np.abs(s.inverse_transform(s.transform(X)) - X)) < 1e-9


def test_standardizer_needs_two_samples():
    with pytest.raises(InvalidInputError):
        fit_standardizer(np.ones((1, 3)))


# --- logistic ---------------------------------------------------------------

@pytest.mark.parametrize("seed", range(25))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    X, y = random_problem(rng)
    theta = rng.normal(scale=0.7, size=X.shape[1] + 1)
    ridge = float(rng.uniform(0.1, 2.0))
    analytic = penalized_gradient(theta, X, y, ridge)
    numeric = central_diff(lambda t: penalized_loglik(t, X, y, ridge), theta)
    rel = np.linalg.norm(analytic - numeric) / np.linalg.norm(analytic)
    assert rel < 1e-6


def test_fit_reaches_stationary_point():
    X, y = random_problem(np.random.default_rng(4), 40, 5)
    fit = fit_logistic(X, y)
    assert fit.converged
    theta = np.append(fit.weights, fit.bias)
    assert np.max(np.abs(penalized_gradient(theta, X, y, 1.0))) < 1e-8


def test_separable_data_fits_perfectly():
    x = np.concatenate([np.linspace(-3, -1, 15), np.linspace(1, 3, 15)])[:, None]
    y = np.array([0] * 15 + [1] * 15)
    model = train_severity_model(x, y, ["x"])
    assert np.all(np.isfinite(model.weights))
    assert np.array_equal(model.predict(x), y)


def test_label_flip_negates_parameters():
    X, y = random_problem(np.random.default_rng(9), 30, 4)
    a = fit_logistic(X, y)
    b = fit_logistic(X, 1 - y)
    assert np.max(np.abs(a.weights + b.weights)) < 1e-6
    assert abs(a.bias + b.bias) < 1e-6


def test_no_signal_gives_half():
    X = np.zeros((10, 3))
    y = np.array([0, 1] * 5)
    model = train_severity_model(X, y, ["a", "b", "c"])
    assert np.all(model.weights == 0.0) and model.bias == 0.0
    assert score(model, {"a": 0.0, "b": 0.0, "c": 0.0}) == 0.5


def test_single_class_rejected():
    with pytest.raises(InvalidInputError):
        fit_logistic(np.ones((4, 2)), np.zeros(4))


def test_non_convergence_warns():
    X, y = random_problem(np.random.default_rng(1), 20, 3)
    with pytest.warns(RuntimeWarning, match="gradient"):
        fit = fit_logistic(X, y, max_iter=1)
    assert not fit.converged


def test_fit_is_order_independent():
    rng = np.random.default_rng(2)
    X, y = random_problem(rng, 35, 6)
    perm = rng.permutation(35)
    a, b = fit_logistic(X, y), fit_logistic(X[perm], y[perm])
    assert np.array_equal(a.weights, b.weights) and a.bias == b.bias


# --- score ------------------------------------------------------------------

def make_model(weights, bias=0.0):
    names = tuple(f"f{i}" for i in range(len(weights)))
    from cxrscore.learn import Standardizer
    d = len(weights)
    return SeverityModel(names, Standardizer(np.zeros(d), np.ones(d)), np.array(weights, float), bias)


def test_score_zero_vector():
    assert score(make_model([1.0, -2.0]), {"f0": 0.0, "f1": 0.0}) == 0.5


def test_score_monotone_in_positive_weight():
    m = make_model([0.8, -0.3], 0.1)
    lo = score(m, {"f0": 0.2, "f1": 1.0})
    hi = score(m, {"f0": 0.3, "f1": 1.0})
    assert hi > lo


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=2), st.floats(-50, 50))
def test_score_flip_symmetry_and_open_interval(values, bias):
    m = make_model([1.5, -0.7], bias)
    f = {"f0": values[0], "f1": values[1]}
    s = score(m, f)
    assert 0.0 < s < 1.0
    assert abs(s + score(m.flipped(), f) - 1.0) < 1e-9


def test_score_schema_errors():
    m = make_model([1.0])
    with pytest.raises(SchemaError):
        score(m, {"f0": 1.0, "extra": 2.0})
    with pytest.raises(SchemaError):
        score(m, {})


def test_score_invariant_under_affine_feature_rescaling():
    rng = np.random.default_rng(6)
    X, y = random_problem(rng, 40, 3)
    Xs = X.copy()
    Xs[:, 1] = 7.5 * Xs[:, 1] - 3.0
    a = train_severity_model(X, y, ["a", "b", "c"])
    b = train_severity_model(Xs, y, ["a", "b", "c"])
    assert np.max(np.abs(a.score_matrix(X) - b.score_matrix(Xs))) < 1e-9


def test_model_json_round_trip(tmp_path):
    X, y = random_problem(np.random.default_rng(8), 30, 4)
    m = train_severity_model(X, y, ["a", "b", "c", "d"], manifest={"note": "x"})
    m.save(tmp_path / "m.json")
    back = SeverityModel.load(tmp_path / "m.json")
    assert np.array_equal(back.weights, m.weights) and back.bias == m.bias
    assert np.array_equal(back.standardizer.mean, m.standardizer.mean)
    assert np.array_equal(back.score_matrix(X), m.score_matrix(X))
    assert json.loads((tmp_path / "m.json").read_text())["manifest"]["ridge"] == 1.0


# --- tree -------------------------------------------------------------------

def test_tree_pure_data_is_leaf():
    t = fit_tree(np.arange(25.0)[:, None], np.ones(25, int))
    assert t.depth == 0 and t.n_leaves == 1


def test_tree_single_threshold():
    x = np.concatenate([np.linspace(0.5, 5.0, 10), np.linspace(5.5, 10.0, 10)])[:, None]
    y = (x[:, 0] > 5).astype(int)
    t = fit_tree(x, y)
    oracle = oracles.brute_tree(x.tolist(), y.tolist())
    assert t.root.threshold == oracle["threshold"] == pytest.approx(5.25)
    assert t.n_internal == 1 and t.leaf_sizes == [10, 10]


def test_tree_too_few_samples():
    with pytest.raises(InvalidInputError):
        fit_tree(np.zeros((19, 2)), np.zeros(19, int))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_tree_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(20, 31)), int(rng.integers(1, 4))
    X = np.round(rng.normal(size=(n, d)), 1)
    y = (X[:, 0] + rng.normal(scale=0.8, size=n) > 0).astype(int)
    t = fit_tree(X, y)
    ref = oracles.brute_tree(X.tolist(), y.tolist())
    probe = np.vstack([X, rng.normal(size=(50, d))])
    assert [oracles.brute_predict(ref, row) for row in probe.tolist()] == list(t.predict(probe))
    assert t.depth <= 3 and min(t.leaf_sizes) >= 10


# --- cross-validation -------------------------------------------------------

class Majority:
    def __call__(self, X, y):
        label = int(np.sum(y) * 2 > len(y))

        class Const:
            def predict(self, Z):
                return np.full(len(Z), label)
        return Const()


def test_cv_majority_predictor_analytic():
    n, ones = 25, 15
    y = np.array([1] * ones + [0] * (n - ones))
    X = np.arange(n, dtype=float)[:, None]
    res = leave_two_out_cv(X, y, Majority())
    # the majority never changes after removing two samples, so every held-out 1 is right
    expected = sum(y[i] + y[j] for i, j in oracles.pair_folds(n)) / (2 * comb(n, 2))
    assert res.accuracy == pytest.approx(expected, abs=1e-15) == pytest.approx(0.6)


def test_cv_separable_logistic():
    x = np.concatenate([np.linspace(-3, -1, 15), np.linspace(1, 3, 15)])[:, None]
    y = np.array([0] * 15 + [1] * 15)
    assert leave_two_out_cv(x, y, LogisticFitter()).accuracy >= 0.95


def test_cv_fold_count_and_skips():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(22, 2))
    y = np.array([0] * 11 + [1] * 11)
    res = leave_two_out_cv(X, y, TreeFitter())
    assert res.n_folds == 231 and res.n_executed == 231 and res.n_skipped == 0
    y2 = np.array([0] * 21 + [1])
    skip = leave_two_out_cv(X, y2, LogisticFitter())
    assert skip.n_skipped == 21 and skip.n_executed == 210


def test_cv_permutation_invariant_and_parallel():
    rng = np.random.default_rng(12)
    X = rng.normal(size=(26, 3))
    y = (X[:, 0] + rng.normal(size=26) > 0).astype(int)
    perm = rng.permutation(26)
    for fitter in (TreeFitter(), LogisticFitter()):
        a = leave_two_out_cv(X, y, fitter)
        assert a == leave_two_out_cv(X[perm], y[perm], fitter)
        assert a == leave_two_out_cv(X, y, fitter, jobs=3)


def test_cv_too_few():
    with pytest.raises(InvalidInputError):
        leave_two_out_cv(np.zeros((21, 1)), np.zeros(21), TreeFitter())


# --- confusion --------------------------------------------------------------

def test_confusion_examples():
    y = np.array([1, 0, 1, 0, 0])
    c = confusion(y, y)
    assert c.fp == c.fn == 0
    c = confusion(1 - y, y)
    assert c.tp == c.tn == 0
    c = confusion([1, 1, 0, 0], [1, 0, 0, 0])
    assert (c.tp, c.fp, c.tn, c.fn, c.accuracy) == (1, 1, 2, 0, 0.75)
    with pytest.raises(InvalidInputError):
        confusion([1], [1, 0])
