"""Weighted logistic and linear regression.

The logistic fit maximizes the weight-scaled log-likelihood

    sum_i w_i * (s_i * eta_i - log(1 + exp(eta_i))) - ridge/2 * ||slopes||^2

by Newton-Raphson / IRLS with step halving. The intercept is never
penalized. Because the penalty is not scaled by the weights, a fit with
integer weights equals the unweighted fit on the row-replicated data at the
*same* ridge, while multiplying all weights by ``c`` is equivalent to
dividing the ridge by ``c``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import (
    DimensionMismatch,
    EmptyInput,
    LengthMismatch,
    NumericalFailure,
    RankDeficient,
    SingleClassError,
)

_PROB_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class LogisticFit:
    coefficients: np.ndarray  # intercept first
    fitted_probabilities: np.ndarray
    converged: bool
    iterations: int
    final_deviance: float
    ridge_penalty: float

    @property
    def intercept(self) -> float:
        return float(self.coefficients[0])

    @property
    def slopes(self) -> np.ndarray:
        return self.coefficients[1:]


@dataclass(frozen=True)
class LinearFit:
    coefficients: np.ndarray  # intercept first
    training_weight_total: float

    @property
    def intercept(self) -> float:
        return float(self.coefficients[0])

    @property
    def slopes(self) -> np.ndarray:
        return self.coefficients[1:]


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D design matrix, got {X.ndim}-D")
    return X


def _check_weights(weights, n) -> np.ndarray:
    if weights is None:
        return np.ones(n)
    w = np.asarray(weights, dtype=float).ravel()
    if len(w) != n:
        raise LengthMismatch(f"{len(w)} weights for {n} rows")
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and nonnegative")
    return w


def _with_intercept(X: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((X.shape[0], 1)), X])


def _clip_prob(p):
    return np.clip(p, _PROB_EPS, 1.0 - _PROB_EPS)


def _penalized_deviance(eta, labels, w, beta, ridge):
    # -2 * penalized log-likelihood
    log1pexp = np.logaddexp(0.0, eta)
    loglik = np.sum(w * (labels * eta - log1pexp))
    return -2.0 * loglik + ridge * float(beta[1:] @ beta[1:])


def fit_logistic(X, labels, weights=None, ridge=0.0, max_iter=100, tol=1e-8) -> LogisticFit:
    """Fit a (weighted, ridge-penalized) logistic regression by IRLS.

    Parameters
    ----------
    X : array-like of shape (n, d)
    labels : array-like of shape (n,)
        Binary 0/1 class labels.
    weights : array-like of shape (n,), optional
        Nonnegative observation weights; rows with weight 0 do not contribute.
    ridge : float
        L2 penalty on the slopes (intercept unpenalized).
    max_iter : int
    tol : float
        Convergence threshold on ``|dev - dev_old| / (|dev| + 0.1)``.

    Returns
    -------
    LogisticFit

    Raises
    ------
    SingleClassError
        If all positively weighted labels are identical.
    NumericalFailure
        If the weighted design is rank deficient and ``ridge`` is 0, or the
        Newton system cannot be solved.
    """
    X = _as_matrix(X)
    n, d = X.shape
    s = np.asarray(labels, dtype=float).ravel()
    if len(s) != n:
        raise LengthMismatch(f"X has {n} rows but labels has {len(s)}")
    if n == 0:
        raise EmptyInput("no rows to fit")
    if not np.all((s == 0) | (s == 1)):
        raise ValueError("labels must be 0 or 1")
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    w = _check_weights(weights, n)
    active = w > 0
    if not np.any(active) or np.all(s[active] == s[active][0]):
        raise SingleClassError("both classes must be present among positively weighted rows")

    Z = _with_intercept(X)
    penalty = np.full(d + 1, float(ridge))
    penalty[0] = 0.0
    if ridge == 0 and np.linalg.matrix_rank(Z[active]) < d + 1:
        raise NumericalFailure("weighted design matrix is rank deficient; use ridge > 0")

    beta = np.zeros(d + 1)
    # start the intercept at the weighted log-odds
    p_bar = np.sum(w * s) / np.sum(w)
    beta[0] = np.log(p_bar / (1.0 - p_bar))
    eta = Z @ beta
    dev = _penalized_deviance(eta, s, w, beta, ridge)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = expit(eta)
        grad = Z.T @ (w * (s - p)) - penalty * beta
        hess = (Z * (w * p * (1.0 - p))[:, None]).T @ Z + np.diag(penalty)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure(f"singular Newton system at iteration {it}") from exc
        if not np.all(np.isfinite(step)):
            raise NumericalFailure(f"non-finite Newton step at iteration {it}")

        # step halving keeps the penalized deviance non-increasing
        t = 1.0
        for _ in range(50):
            cand = beta + t * step
            cand_eta = Z @ cand
            cand_dev = _penalized_deviance(cand_eta, s, w, cand, ridge)
            if np.isfinite(cand_dev) and cand_dev <= dev + 1e-12 * abs(dev):
                break
            t *= 0.5
        else:
            cand, cand_eta, cand_dev = beta, eta, dev

        change = abs(cand_dev - dev) / (abs(cand_dev) + 0.1)
        beta, eta, dev = cand, cand_eta, cand_dev
        if change < tol:
            converged = True
            break

    if not np.all(np.isfinite(beta)):
        raise NumericalFailure("coefficients diverged")
    return LogisticFit(
        coefficients=beta,
        fitted_probabilities=_clip_prob(expit(eta)),
        converged=converged,
        iterations=it,
        final_deviance=float(dev),
        ridge_penalty=float(ridge),
    )


def predict_proba(fit: LogisticFit, X) -> np.ndarray:
    """Logistic of ``intercept + X @ slopes``, clipped into the open unit interval."""
    X = _as_matrix(X)
    if X.shape[1] != len(fit.coefficients) - 1:
        raise DimensionMismatch(
            f"fit has {len(fit.coefficients) - 1} covariates, X has {X.shape[1]}"
        )
    return _clip_prob(expit(fit.coefficients[0] + X @ fit.coefficients[1:]))


def fit_weighted_linear(X, y, weights=None) -> LinearFit:
    """Weighted least squares with an intercept.

    Minimizes ``sum_j w_j (y_j - b0 - x_j @ b)^2``. Rows with zero weight are
    dropped before solving, so they have no influence at all.

    Raises
    ------
    RankDeficient
        If the weighted normal equations are singular (including fewer than
        ``d + 1`` positively weighted rows).
    """
    X = _as_matrix(X)
    n, d = X.shape
    y = np.asarray(y, dtype=float).ravel()
    if len(y) != n:
        raise LengthMismatch(f"X has {n} rows but y has {len(y)}")
    w = _check_weights(weights, n)
    total = float(np.sum(w))
    if not total > 0:
        raise RankDeficient("sum of weights must be positive")
    keep = w > 0
    if np.count_nonzero(keep) < d + 1:
        raise RankDeficient(
            f"{np.count_nonzero(keep)} positively weighted rows for {d + 1} coefficients"
        )
    Z = _with_intercept(X[keep])
    sw = np.sqrt(w[keep])
    A = Z * sw[:, None]
    coef, _, rank, _ = np.linalg.lstsq(A, y[keep] * sw, rcond=None)
    if rank < d + 1:
        raise RankDeficient("weighted normal equations are singular")
    return LinearFit(coefficients=coef, training_weight_total=total)


def predict_linear(fit: LinearFit, X) -> np.ndarray:
    X = _as_matrix(X)
    if X.shape[1] != len(fit.coefficients) - 1:
        raise DimensionMismatch(
            f"fit has {len(fit.coefficients) - 1} covariates, X has {X.shape[1]}"
        )
    return fit.coefficients[0] + X @ fit.coefficients[1:]


def rmse(predicted, actual) -> float:
    predicted = np.asarray(predicted, dtype=float).ravel()
    actual = np.asarray(actual, dtype=float).ravel()
    if len(predicted) != len(actual):
        raise LengthMismatch(f"{len(predicted)} predictions for {len(actual)} outcomes")
    if len(actual) == 0:
        raise EmptyInput("rmse of empty vectors")
    return float(np.sqrt(np.mean((predicted - actual) ** 2)))


class LogisticIRLS(ClassifierMixin, BaseEstimator):
    """Binary logistic regression fitted by IRLS, scikit-learn compatible.

    Parameters
    ----------
    ridge : float, default=0.0
        L2 penalty on the slopes; the intercept is never penalized.
    max_iter : int, default=100
    tol : float, default=1e-8

    Attributes
    ----------
    fit_ : LogisticFit
    classes_ : ndarray of shape (2,)
    coef_ : ndarray of shape (1, n_features)
    intercept_ : ndarray of shape (1,)
    n_iter_ : int
    converged_ : bool
    """

    def __init__(self, ridge=0.0, max_iter=100, tol=1e-8):
        self.ridge = ridge
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y, sample_weight=None):
        X, y = check_X_y(X, y)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise SingleClassError(f"need exactly two classes, got {len(self.classes_)}")
        labels = (y == self.classes_[1]).astype(float)
        self.fit_ = fit_logistic(
            X, labels, sample_weight, ridge=self.ridge, max_iter=self.max_iter, tol=self.tol
        )
        self.n_features_in_ = X.shape[1]
        self.coef_ = self.fit_.slopes.reshape(1, -1)
        self.intercept_ = self.fit_.coefficients[:1].copy()
        self.n_iter_ = self.fit_.iterations
        self.converged_ = self.fit_.converged
        return self

    def decision_function(self, X):
        check_is_fitted(self, "fit_")
        X = check_array(X)
        return self.intercept_[0] + X @ self.coef_[0]

    def predict_proba(self, X):
        check_is_fitted(self, "fit_")
        p = predict_proba(self.fit_, check_array(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return self.classes_[(self.predict_proba(X)[:, 1] > 0.5).astype(int)]


class WeightedLinearRegression(RegressorMixin, BaseEstimator):
    """Ordinary / weighted least squares with an unpenalized intercept.

    Attributes
    ----------
    fit_ : LinearFit
    coef_ : ndarray of shape (n_features,)
    intercept_ : float
    """

    def fit(self, X, y, sample_weight=None):
        X, y = check_X_y(X, y, y_numeric=True)
        self.fit_ = fit_weighted_linear(X, y, sample_weight)
        self.n_features_in_ = X.shape[1]
        self.coef_ = self.fit_.slopes.copy()
        self.intercept_ = self.fit_.intercept
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        return predict_linear(self.fit_, check_array(X))
