"""Similarity weights for borrowing external subgroup observations.

For every external subgroup a separate logistic model discriminates target
rows (label 1) from that subgroup's rows (label 0) using the covariates
*and* the outcome. Target rows receive weight 1. An external row ``j``
receives

    w_j = p_j / max(AUC, 0.5)

where ``p_j`` is its fitted probability of target membership and AUC is
the in-sample probability that a random target row scores above a random
row of the same external subgroup (ties count one half). Similar subgroups
(AUC near 0.5) are thus scaled up by as much as 2, well separated ones
are left at their already small propensities.

Optional truncation zeroes external rows whose propensity falls below a
percentile of the target propensity distribution (linear interpolation
between order statistics, ``numpy.percentile(method="linear")``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata
from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from .data import Dataset
from .exceptions import AllZeroWeights, EmptyInput, NumericalFailure, SingleClassError
from .glm import LogisticFit, WeightedLinearRegression, fit_logistic

logger = logging.getLogger(__name__)

DEFAULT_RIDGE = 1e-6
DEFAULT_TRUNCATION_PERCENTILE = 5.0


@dataclass(frozen=True)
class PropensityComparison:
    target_label: object
    external_label: object
    fit: LogisticFit
    p_target: np.ndarray
    p_external: np.ndarray
    auc: float

    @property
    def auc_clamped(self) -> float:
        return max(self.auc, 0.5)


@dataclass(frozen=True)
class WeightedSample:
    """Target rows (weight 1) followed by external rows grouped by subgroup."""

    data: Dataset
    weights: np.ndarray
    ess: float
    ess_ratio: float
    n_target: int
    truncation_percentile: float | None
    comparisons: list = field(default_factory=list)
    failed: list = field(default_factory=list)
    # p-hat per row; target rows use their score from the first comparison
    propensities: np.ndarray | None = None

    @property
    def is_target(self) -> np.ndarray:
        mask = np.zeros(self.data.n, dtype=bool)
        mask[: self.n_target] = True
        return mask


def _stack_design(ds: Dataset) -> np.ndarray:
    # the outcome enters the propensity model alongside the covariates
    return np.column_stack([ds.covariates, ds.outcome])


def compute_auc(p_target, p_external) -> float:
    """Probability that a target score exceeds an external score, ties counted 1/2.

    Computed from midranks (Mann-Whitney U divided by ``n_t * n_e``).
    """
    pt = np.asarray(p_target, dtype=float).ravel()
    pe = np.asarray(p_external, dtype=float).ravel()
    if len(pt) == 0 or len(pe) == 0:
        raise EmptyInput("AUC needs at least one score in each group")
    ranks = rankdata(np.concatenate([pt, pe]))
    n_t, n_e = len(pt), len(pe)
    u = ranks[:n_t].sum() - n_t * (n_t + 1) / 2.0
    return float(u / (n_t * n_e))


def fit_propensity(
    target: Dataset,
    external: Dataset,
    ridge: float = DEFAULT_RIDGE,
    max_iter: int = 100,
    tol: float = 1e-8,
) -> PropensityComparison:
    """Fit the target-vs-external membership model on covariates plus outcome."""
    target.check_schema(external)
    if target.n == 0 or external.n == 0:
        raise EmptyInput("target and external must be nonempty")
    Z = np.vstack([_stack_design(target), _stack_design(external)])
    labels = np.concatenate([np.ones(target.n), np.zeros(external.n)])
    fit = fit_logistic(Z, labels, ridge=ridge, max_iter=max_iter, tol=tol)
    p = fit.fitted_probabilities
    p_t, p_e = p[: target.n], p[target.n :]
    return PropensityComparison(
        target_label=_single_label(target),
        external_label=_single_label(external),
        fit=fit,
        p_target=p_t,
        p_external=p_e,
        auc=compute_auc(p_t, p_e),
    )


def _single_label(ds: Dataset):
    labels = ds.labels()
    return labels[0] if len(labels) == 1 else tuple(labels)


def compute_weights(comparison: PropensityComparison, adjust_auc: bool = True):
    """Return ``(target_weights, external_weights)`` for one comparison.

    With ``adjust_auc=False`` the external weights are the bare propensities.
    """
    w_t = np.ones(len(comparison.p_target))
    w_e = np.array(comparison.p_external, dtype=float)
    if adjust_auc:
        w_e = w_e / comparison.auc_clamped
    return w_t, w_e


def truncation_threshold(p_target, percentile: float) -> float:
    if not 0 <= percentile < 100:
        raise ValueError("percentile must lie in [0, 100)")
    return float(np.percentile(np.asarray(p_target, dtype=float), percentile, method="linear"))


def truncate_weights(comparison: PropensityComparison, external_weights, percentile: float):
    """Zero external weights whose propensity lies below the target percentile.

    The comparison is made on the propensity scale, not on the weight.
    ``percentile=0`` places the threshold below every score and changes
    nothing.
    """
    w = np.array(external_weights, dtype=float)
    t = truncation_threshold(comparison.p_target, percentile)
    if percentile == 0:
        return w
    w[np.asarray(comparison.p_external) < t] = 0.0
    return w


def effective_sample_size(weights) -> float:
    """Kish effective sample size ``(sum w)^2 / sum w^2``."""
    w = np.asarray(weights, dtype=float).ravel()
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if not w.sum() > 0:
        raise AllZeroWeights("effective sample size undefined when all weights are zero")
    # scale-free, so normalize first to keep tiny weights from underflowing
    w = w / w.max()
    total = w.sum()
    return float(total * total / np.dot(w, w))


def build_weighted_sample(
    target: Dataset,
    externals,
    truncation_percentile: float | None = None,
    *,
    adjust_auc: bool = True,
    ridge: float = DEFAULT_RIDGE,
    max_iter: int = 100,
    tol: float = 1e-8,
) -> WeightedSample:
    """Weight every external subgroup against the target and concatenate.

    Each external dataset is compared with the target independently. A
    subgroup whose propensity fit fails is kept with all-zero weights and
    its label recorded in ``failed``.
    """
    externals = list(externals)
    if not externals:
        raise EmptyInput("at least one external subgroup is required")
    for ext in externals:
        target.check_schema(ext)

    parts_w = [np.ones(target.n)]
    parts_p = []
    comparisons, failed = [], []
    p_target = None
    for ext in externals:
        try:
            comp = fit_propensity(target, ext, ridge=ridge, max_iter=max_iter, tol=tol)
        except (SingleClassError, NumericalFailure) as exc:
            label = _single_label(ext)
            logger.warning("propensity fit failed for subgroup %r: %s", label, exc)
            failed.append(label)
            parts_w.append(np.zeros(ext.n))
            parts_p.append(np.full(ext.n, np.nan))
            continue
        _, w_e = compute_weights(comp, adjust_auc=adjust_auc)
        if truncation_percentile is not None:
            w_e = truncate_weights(comp, w_e, truncation_percentile)
        if p_target is None:
            p_target = comp.p_target
        comparisons.append(comp)
        parts_w.append(w_e)
        parts_p.append(comp.p_external)

    weights = np.concatenate(parts_w)
    ess = effective_sample_size(weights)
    if p_target is None:
        p_target = np.full(target.n, np.nan)
    return WeightedSample(
        data=Dataset.concat([target, *externals]),
        weights=weights,
        ess=ess,
        ess_ratio=ess / target.n,
        n_target=target.n,
        truncation_percentile=truncation_percentile,
        comparisons=comparisons,
        failed=failed,
        propensities=np.concatenate([p_target, *parts_p]),
    )


class SimilarityWeighter(BaseEstimator):
    """Estimate similarity weights for rows of a multi-subgroup dataset.

    Follows the scikit-learn estimator conventions; ``fit`` takes the
    covariates, the outcome and the subgroup label of every row, and the
    learned weights are returned in the input row order so they can be
    handed directly to any estimator's ``sample_weight``.

    Parameters
    ----------
    target : object
        Label of the target subgroup.
    truncation_percentile : float or None, default=None
        Enables truncation at this percentile of the target propensities.
    adjust_auc : bool, default=True
        Divide propensities by the clamped subgroup AUC. ``False`` gives
        the propensity-only weights.
    ridge : float, default=1e-6
    max_iter : int, default=100
    tol : float, default=1e-8

    Attributes
    ----------
    weights_ : ndarray of shape (n_samples,)
    propensities_ : ndarray of shape (n_samples,)
    comparisons_ : dict
        External label -> PropensityComparison.
    failed_ : list
    ess_ : float
    ess_ratio_ : float
    """

    def __init__(
        self,
        target=0,
        truncation_percentile=None,
        adjust_auc=True,
        ridge=DEFAULT_RIDGE,
        max_iter=100,
        tol=1e-8,
    ):
        self.target = target
        self.truncation_percentile = truncation_percentile
        self.adjust_auc = adjust_auc
        self.ridge = ridge
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y, groups):
        X = check_array(X)
        y = np.asarray(y, dtype=float).ravel()
        groups = np.asarray(groups)
        check_consistent_length(X, y, groups)
        ds = Dataset(X, y, groups)
        tgt_idx = np.flatnonzero(groups == self.target)
        target, externals = ds.split(self.target)
        ext_idx = [np.flatnonzero(groups == lab) for lab in ds.labels() if lab != self.target]
        sample = build_weighted_sample(
            target,
            externals,
            self.truncation_percentile,
            adjust_auc=self.adjust_auc,
            ridge=self.ridge,
            max_iter=self.max_iter,
            tol=self.tol,
        )
        order = np.concatenate([tgt_idx, *ext_idx])
        self.weights_ = np.empty(len(y))
        self.weights_[order] = sample.weights
        self.propensities_ = np.empty(len(y))
        self.propensities_[order] = sample.propensities
        self.comparisons_ = {c.external_label: c for c in sample.comparisons}
        self.failed_ = list(sample.failed)
        self.ess_ = sample.ess
        self.ess_ratio_ = sample.ess_ratio
        self.n_features_in_ = X.shape[1]
        self.sample_ = sample
        return self

    def fit_weights(self, X, y, groups):
        """Fit and return the weights in input row order."""
        return self.fit(X, y, groups).weights_

    def get_weights(self):
        check_is_fitted(self, "weights_")
        return self.weights_.copy()


class SimilarityWeightedRegressor(BaseEstimator):
    """Fit a regressor on the target plus similarity-weighted external rows.

    Parameters
    ----------
    estimator : regressor, optional
        Any estimator whose ``fit`` accepts ``sample_weight``. Defaults to
        :class:`~simweights.glm.WeightedLinearRegression`.
    target, truncation_percentile, adjust_auc, ridge
        Forwarded to :class:`SimilarityWeighter`.
    """

    def __init__(
        self, estimator=None, target=0, truncation_percentile=None, adjust_auc=True,
        ridge=DEFAULT_RIDGE,
    ):
        self.estimator = estimator
        self.target = target
        self.truncation_percentile = truncation_percentile
        self.adjust_auc = adjust_auc
        self.ridge = ridge

    def fit(self, X, y, groups):
        self.weighter_ = SimilarityWeighter(
            target=self.target,
            truncation_percentile=self.truncation_percentile,
            adjust_auc=self.adjust_auc,
            ridge=self.ridge,
        ).fit(X, y, groups)
        base = WeightedLinearRegression() if self.estimator is None else clone(self.estimator)
        self.estimator_ = base.fit(check_array(X), y, sample_weight=self.weighter_.weights_)
        self.n_features_in_ = self.weighter_.n_features_in_
        return self

    def predict(self, X):
        check_is_fitted(self, "estimator_")
        return self.estimator_.predict(X)
