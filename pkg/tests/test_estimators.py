import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.linear_model import LinearRegression

from simweights.glm import LogisticIRLS, WeightedLinearRegression, fit_weighted_linear
from simweights.scm import ScenarioSpec, simulate
from simweights.weights import SimilarityWeightedRegressor, SimilarityWeighter, build_weighted_sample


@pytest.fixture(scope="module")
def sim():
    return simulate(ScenarioSpec("covariate", (0, 0.5, 2.0), (20, 40, 40), seed=3)).data


def shuffled(data, seed=0):
    perm = np.random.default_rng(seed).permutation(data.n)
    return data.covariates[perm], data.outcome[perm], data.subgroup[perm], perm


@pytest.mark.parametrize(
    "est",
    [
        LogisticIRLS(ridge=0.5, max_iter=7),
        WeightedLinearRegression(),
        SimilarityWeighter(target=2, truncation_percentile=5.0, adjust_auc=False),
        SimilarityWeightedRegressor(estimator=LinearRegression(), target=1),
    ],
)
def test_params_round_trip_through_clone(est):
    c = clone(est)
    # nested estimators are cloned too, so compare them by repr
    assert {k: repr(v) for k, v in c.get_params().items()} == {k: repr(v) for k, v in est.get_params().items()}
    assert c is not est


def test_logistic_estimator_matches_function_and_labels(sim):
    X = sim.covariates
    y = np.where(sim.subgroup == 0, "target", "other")
    clf = LogisticIRLS(ridge=1e-6).fit(X, y)
    assert list(clf.classes_) == ["other", "target"]
    assert clf.coef_.shape == (1, 4) and clf.converged_
    proba = clf.predict_proba(X)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    np.testing.assert_allclose(proba[:, 1], clf.fit_.fitted_probabilities, atol=1e-12)
    assert set(clf.predict(X)) <= {"other", "target"}
    assert 0.0 <= clf.score(X, y) <= 1.0


def test_linear_estimator_matches_sklearn(sim):
    w = np.random.default_rng(1).uniform(0.1, 2.0, sim.n)
    ours = WeightedLinearRegression().fit(sim.covariates, sim.outcome, sample_weight=w)
    ref = LinearRegression().fit(sim.covariates, sim.outcome, sample_weight=w)
    np.testing.assert_allclose(ours.coef_, ref.coef_, atol=1e-10)
    assert ours.intercept_ == pytest.approx(ref.intercept_, abs=1e-10)


def test_unfitted_estimators_raise():
    with pytest.raises(NotFittedError):
        WeightedLinearRegression().predict([[0.0]])
    with pytest.raises(NotFittedError):
        SimilarityWeighter().get_weights()


def test_weighter_returns_weights_in_input_order(sim):
    X, y, g, perm = shuffled(sim)
    wt = SimilarityWeighter(target=0).fit(X, y, g)
    target, externals = sim.split(0)
    ref = build_weighted_sample(target, externals)
    # reference weights are in target-then-label order, which is sim's own order
    np.testing.assert_allclose(wt.weights_, ref.weights[perm], atol=1e-10)
    assert np.all(wt.weights_[g == 0] == 1.0)
    assert set(wt.comparisons_) == {1, 2}
    assert wt.ess_ == pytest.approx(ref.ess)


def test_weighted_regressor_equals_manual_pipeline(sim):
    X, y, g, _ = shuffled(sim, seed=4)
    reg = SimilarityWeightedRegressor(target=0).fit(X, y, g)
    w = SimilarityWeighter(target=0).fit_weights(X, y, g)
    manual = fit_weighted_linear(X, y, w)
    np.testing.assert_allclose(reg.predict(X[:5]), manual.coefficients[0] + X[:5] @ manual.slopes, atol=1e-10)


def test_weighted_regressor_accepts_sklearn_estimator(sim):
    X, y, g, _ = shuffled(sim, seed=5)
    ours = SimilarityWeightedRegressor(target=0).fit(X, y, g)
    theirs = SimilarityWeightedRegressor(estimator=LinearRegression(), target=0).fit(X, y, g)
    np.testing.assert_allclose(ours.predict(X), theirs.predict(X), atol=1e-9)
