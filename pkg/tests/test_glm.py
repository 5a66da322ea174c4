import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import grid_search_logistic
from simweights.exceptions import (
    DimensionMismatch,
    EmptyInput,
    LengthMismatch,
    NumericalFailure,
    RankDeficient,
    SingleClassError,
)
from simweights.glm import (
    LinearFit,
    LogisticFit,
    fit_logistic,
    fit_weighted_linear,
    predict_linear,
    predict_proba,
    rmse,
)


# ---------------------------------------------------------------- fit_logistic


def test_logistic_balanced_symmetric_data_gives_zero_coefficients():
    fit = fit_logistic([[-1.0], [-1.0], [1.0], [1.0]], [0, 1, 0, 1])
    np.testing.assert_allclose(fit.coefficients, [0.0, 0.0], atol=1e-12)
    assert fit.converged


def test_logistic_single_class_raises():
    with pytest.raises(SingleClassError):
        fit_logistic([[0.0], [1.0], [2.0]], [1, 1, 1])


def test_logistic_single_class_among_positive_weights_raises():
    with pytest.raises(SingleClassError):
        fit_logistic([[0.0], [1.0], [2.0]], [1, 1, 0], weights=[1, 1, 0])


X6 = np.array([-2.0, -1.0, -0.3, 0.4, 1.1, 2.5])
S6 = np.array([0, 1, 0, 1, 0, 1])


def test_logistic_matches_grid_search_oracle():
    oracle = grid_search_logistic(X6, S6, np.ones(6), 1e-6)
    fit = fit_logistic(X6[:, None], S6, ridge=1e-6)
    np.testing.assert_allclose(fit.coefficients, oracle, atol=1e-3)


def test_weighted_logistic_matches_grid_search_oracle():
    w = np.array([0.5, 2.0, 1.0, 0.3, 1.7, 1.0])
    oracle = grid_search_logistic(X6, S6, w, 0.25)
    fit = fit_logistic(X6[:, None], S6, weights=w, ridge=0.25)
    np.testing.assert_allclose(fit.coefficients, oracle, atol=1e-3)


def test_logistic_score_equations_hold_at_convergence():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(40, 3))
    s = (X @ [1.0, -0.5, 0.2] + rng.normal(size=40) > 0).astype(float)
    ridge = 0.1
    fit = fit_logistic(X, s, ridge=ridge)
    Z = np.column_stack([np.ones(40), X])
    grad = Z.T @ (s - fit.fitted_probabilities)
    grad[1:] -= ridge * fit.coefficients[1:]
    assert fit.converged
    np.testing.assert_allclose(grad, 0.0, atol=1e-6)


def test_logistic_separable_data_with_ridge_is_finite():
    X = np.array([[-3.0], [-2.0], [-1.0], [1.0], [2.0], [3.0]])
    s = np.array([0, 0, 0, 1, 1, 1])
    fit = fit_logistic(X, s, ridge=1e-6)
    assert np.all(np.isfinite(fit.coefficients))
    assert np.all((fit.fitted_probabilities > 0) & (fit.fitted_probabilities < 1))
    assert fit.coefficients[1] > 1.0


def test_logistic_rank_deficient_without_ridge_fails():
    X = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0], [4.0, 8.0]])
    with pytest.raises(NumericalFailure):
        fit_logistic(X, [0, 1, 0, 1], ridge=0.0)
    # a ridge repairs it
    fit = fit_logistic(X, [0, 1, 0, 1], ridge=1e-3)
    assert np.all(np.isfinite(fit.coefficients))


def test_logistic_reports_nonconvergence():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 2))
    s = (X[:, 0] > 0).astype(float)
    fit = fit_logistic(X, s, ridge=1e-8, max_iter=2)
    assert not fit.converged
    assert fit.iterations == 2


def test_logistic_replication_equivalence():
    # integer weights == replicated rows, at the same ridge
    rng = np.random.default_rng(11)
    X = rng.normal(size=(12, 2))
    s = np.array([0, 1] * 6)
    w = rng.integers(1, 4, size=12)
    fit_w = fit_logistic(X, s, weights=w, ridge=0.5)
    rep = np.repeat(np.arange(12), w)
    fit_r = fit_logistic(X[rep], s[rep], ridge=0.5)
    np.testing.assert_allclose(fit_w.coefficients, fit_r.coefficients, atol=1e-6)


@settings(max_examples=30, deadline=None)
@given(c=st.floats(0.01, 100.0), seed=st.integers(0, 10_000))
def test_logistic_weight_scaling_invariance_without_ridge(c, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(25, 2))
    s = (X[:, 0] + rng.normal(scale=1.5, size=25) > 0).astype(float)
    if s.min() == s.max():
        s[0] = 1 - s[0]
    w = rng.uniform(0.2, 2.0, size=25)
    a = fit_logistic(X, s, weights=w, ridge=0.0)
    b = fit_logistic(X, s, weights=c * w, ridge=0.0)
    np.testing.assert_allclose(a.coefficients, b.coefficients, atol=1e-6)


# --------------------------------------------------------------- predict_proba


def _logistic_fit(coef):
    return LogisticFit(np.asarray(coef, float), np.array([0.5]), True, 1, 0.0, 0.0)


def test_predict_proba_zero_coefficients():
    p = predict_proba(_logistic_fit([0, 0, 0]), np.random.default_rng(0).normal(size=(5, 2)))
    np.testing.assert_array_equal(p, 0.5)


def test_predict_proba_examples():
    assert predict_proba(_logistic_fit([0, 1]), [[0.0]])[0] == 0.5
    expected = math.exp(3) / (1 + math.exp(3))
    assert predict_proba(_logistic_fit([1, 2]), [[1.0]])[0] == pytest.approx(expected, abs=1e-12)
    assert predict_proba(_logistic_fit([1, 2]), [[1.0]])[0] == pytest.approx(0.95257, abs=1e-5)


def test_predict_proba_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        predict_proba(_logistic_fit([0, 1]), [[0.0, 1.0]])


@given(arrays(float, 20, elements=st.floats(-50, 50)))
def test_predict_proba_monotone_and_open_interval(eta):
    eta = np.sort(eta)
    p = predict_proba(_logistic_fit([0, 1]), eta[:, None])
    assert np.all(np.diff(p) >= 0)
    assert np.all((p > 0) & (p < 1))


# -------------------------------------------------------- fit_weighted_linear


def test_linear_exact_data():
    fit = fit_weighted_linear([[0.0], [1.0], [2.0]], [0.0, 1.0, 2.0], [1, 1, 1])
    np.testing.assert_allclose(fit.coefficients, [0.0, 1.0], atol=1e-12)
    assert fit.training_weight_total == 3.0


def test_linear_zero_weight_outlier_ignored():
    fit = fit_weighted_linear([[0.0], [1.0], [2.0], [100.0]], [0.0, 1.0, 2.0, -50.0], [1, 1, 1, 0])
    np.testing.assert_allclose(fit.coefficients, [0.0, 1.0], atol=1e-12)


def test_linear_integer_weights_equal_replication():
    X = np.array([[0.3], [1.7], [2.2]])
    y = np.array([1.0, 0.2, 3.1])
    w = np.array([2, 1, 3])
    fit_w = fit_weighted_linear(X, y, w)
    rep = np.repeat(np.arange(3), w)
    fit_r = fit_weighted_linear(X[rep], y[rep])
    np.testing.assert_allclose(fit_w.coefficients, fit_r.coefficients, atol=1e-8)


def test_linear_unit_weights_match_normal_equations():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(30, 3))
    y = rng.normal(size=30)
    Z = np.column_stack([np.ones(30), X])
    closed = np.linalg.solve(Z.T @ Z, Z.T @ y)
    fit = fit_weighted_linear(X, y, np.ones(30))
    np.testing.assert_allclose(fit.coefficients, closed, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(c=st.floats(1e-3, 1e3), seed=st.integers(0, 10_000))
def test_linear_weight_scaling_invariance(c, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(15, 2))
    y = rng.normal(size=15)
    w = rng.uniform(0.1, 3.0, size=15)
    a = fit_weighted_linear(X, y, w)
    b = fit_weighted_linear(X, y, c * w)
    np.testing.assert_allclose(a.coefficients, b.coefficients, atol=1e-10)


def test_linear_rank_deficient():
    with pytest.raises(RankDeficient):
        fit_weighted_linear([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]], [1.0, 2.0, 3.0])
    with pytest.raises(RankDeficient):
        fit_weighted_linear([[1.0], [2.0], [3.0]], [1.0, 2.0, 3.0], [1, 0, 0])


# ----------------------------------------------------------- predict_linear


@pytest.mark.parametrize(
    "coef, row, expected",
    [([0, 1], [3.0], 3.0), ([2, 0], [123.4], 2.0), ([1, 2, -1], [2.0, 3.0], 2.0)],
)
def test_predict_linear_examples(coef, row, expected):
    fit = LinearFit(np.asarray(coef, float), 1.0)
    assert predict_linear(fit, [row])[0] == expected


def test_predict_linear_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        predict_linear(LinearFit(np.array([0.0, 1.0]), 1.0), [[1.0, 2.0]])


# --------------------------------------------------------------------- rmse


def test_rmse_examples():
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert rmse([0, 0], [3, 4]) == pytest.approx(math.sqrt(12.5), abs=1e-12)
    assert rmse([0, 0], [3, 4]) == pytest.approx(3.5355, abs=1e-4)


def test_rmse_matches_loop():
    rng = np.random.default_rng(9)
    a, b = rng.normal(size=10), rng.normal(size=10)
    total = 0.0
    for i in range(10):
        total += (a[i] - b[i]) ** 2
    assert rmse(a, b) == pytest.approx(math.sqrt(total / 10), rel=1e-15)


def test_rmse_errors():
    with pytest.raises(LengthMismatch):
        rmse([1.0], [1.0, 2.0])
    with pytest.raises(EmptyInput):
        rmse([], [])
