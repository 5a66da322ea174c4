"""Bootstrap validation of target-specific prediction models on tabular data.

The prediction error of each training strategy (``weighted``, ``global``,
``local``) is estimated with the .632+ bootstrap of Efron & Tibshirani
(1997):

* apparent error ``err``: mean loss on the target rows of a model trained
  on the full sample;
* out-of-bag error ``Err1``: for every target row, the mean loss over the
  replicates that did not draw it, averaged over rows;
* no-information error ``gamma``: mean loss over all pairs
  ``(y_i, prediction_j)`` of target outcomes and full-fit predictions;
* relative overfitting ``R = (Err1 - err) / (gamma - err)`` clipped to
  [0, 1] (0 when ``gamma <= err``);
* ``w = 0.632 / (1 - 0.368 R)`` and
  ``Err632+ = (1 - w) err + w min(Err1, gamma)``.

Replicates resample every subgroup with replacement to its own size, and
the similarity weights are recomputed inside every replicate. Losses are
always evaluated on the original outcome scale; when a Box-Cox transform
is requested the model is trained on transformed outcomes and its
predictions are mapped back through the inverse transform first.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Dataset
from .exceptions import AllZeroWeights, LengthMismatch, NegativeInput, SimWeightsError
from .glm import fit_weighted_linear, predict_linear
from .weights import build_weighted_sample, effective_sample_size

logger = logging.getLogger(__name__)

METHODS = ("weighted", "global", "local")
LOSSES = ("absolute", "squared")


def box_cox(y, lmbda: float, standard: bool = False) -> np.ndarray:
    """Power transform of nonnegative outcomes.

    By default the plain power ``y ** lmbda`` is used (``lmbda = 2`` squares
    the outcome), with ``log(y)`` for ``lmbda = 0``. ``standard=True`` gives
    the textbook form ``(y ** lmbda - 1) / lmbda``.
    """
    y = np.asarray(y, dtype=float)
    if lmbda == 0:
        if np.any(y <= 0):
            raise NegativeInput("log transform needs strictly positive outcomes")
        return np.log(y)
    if np.any(y < 0):
        raise NegativeInput("power transform needs nonnegative outcomes")
    z = y**lmbda
    return (z - 1.0) / lmbda if standard else z


def inverse_box_cox(z, lmbda: float, standard: bool = False) -> np.ndarray:
    """Undo :func:`box_cox`. Values outside the transform's range clip to 0."""
    z = np.asarray(z, dtype=float)
    if lmbda == 0:
        return np.exp(z)
    if standard:
        z = z * lmbda + 1.0
    return np.maximum(z, 0.0) ** (1.0 / lmbda)


@dataclass(frozen=True)
class WeightedCdf:
    values: np.ndarray
    cumulative: np.ndarray

    def __call__(self, t):
        idx = np.searchsorted(self.values, np.asarray(t, dtype=float), side="right")
        return np.where(idx > 0, self.cumulative[np.maximum(idx - 1, 0)], 0.0)


def weighted_cdf(values, weights=None) -> WeightedCdf:
    """Right-continuous step function with jump ``w_j / sum(w)`` at each value."""
    v = np.asarray(values, dtype=float).ravel()
    w = np.ones_like(v) if weights is None else np.asarray(weights, dtype=float).ravel()
    if len(v) != len(w):
        raise LengthMismatch(f"{len(v)} values but {len(w)} weights")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    total = w.sum()
    if not total > 0:
        raise AllZeroWeights("weighted CDF needs positive total weight")
    support, inverse = np.unique(v, return_inverse=True)
    mass = np.bincount(inverse, weights=w, minlength=len(support))
    cum = np.cumsum(mass) / total
    cum[-1] = 1.0
    return WeightedCdf(values=support, cumulative=cum)


def estimate_632plus(apparent: float, oob: float, gamma: float):
    """Combine the three error rates.

    Returns
    -------
    estimate, relative_overfitting, weight, degenerate_gamma
    """
    degenerate = not gamma > apparent
    if degenerate:
        r = 0.0
    else:
        r = (oob - apparent) / (gamma - apparent)
        r = min(max(r, 0.0), 1.0)
    w = 0.632 / (1.0 - 0.368 * r)
    estimate = (1.0 - w) * apparent + w * min(oob, gamma)
    return estimate, r, w, degenerate


def _loss(kind: str, pred, actual):
    diff = np.asarray(pred) - np.asarray(actual)
    if kind == "absolute":
        return np.abs(diff)
    if kind == "squared":
        return diff * diff
    raise ValueError(f"unknown loss {kind!r}; choose from {', '.join(LOSSES)}")


@dataclass
class MethodEstimate:
    method: str
    estimate: float
    apparent: float
    oob: float
    gamma: float
    relative_overfitting: float
    weight_632: float
    degenerate_gamma: bool
    n_train: int
    ess: float
    failed_replicates: int
    # per target row, over out-of-bag replicates, absolute error on original scale
    mae: np.ndarray = field(repr=False)
    mae_p05: np.ndarray = field(repr=False)
    mae_p95: np.ndarray = field(repr=False)
    n_oob: np.ndarray = field(repr=False)
    bands_degenerate: bool = False
    cdf: WeightedCdf | None = field(default=None, repr=False)
    oob_losses: np.ndarray | None = field(default=None, repr=False)  # (B, n_target), NaN in-bag


@dataclass
class BootstrapReport:
    target_label: object
    B: int
    loss: str
    boxcox_lambda: float | None
    seed: int
    target_outcome: np.ndarray
    methods: dict

    def to_dict(self) -> dict:
        """JSON-ready summary; per-row arrays become lists, NaN becomes None."""

        def clean(x):
            if isinstance(x, float) and not math.isfinite(x):
                return None
            return x

        out = {
            "target_label": str(self.target_label),
            "B": self.B,
            "loss": self.loss,
            "boxcox_lambda": self.boxcox_lambda,
            "seed": self.seed,
            "n_target": int(len(self.target_outcome)),
            "methods": {},
        }
        for name, est in self.methods.items():
            out["methods"][name] = {
                k: clean(v)
                for k, v in asdict(est).items()
                if k not in ("mae", "mae_p05", "mae_p95", "n_oob", "cdf", "oob_losses", "method")
            }
        return out


def _training_sample(ds: Dataset, target_label, method: str, truncation_percentile, ridge):
    """Training rows, weights and source row indices for ``method``."""
    if method == "local":
        rows = np.flatnonzero(ds.subgroup == target_label)
        if len(rows) == 0:
            ds.select(target_label)  # raises UnknownSubgroup
        return ds.take(rows), np.ones(len(rows)), rows
    if method == "global":
        return ds, np.ones(ds.n), np.arange(ds.n)
    if method == "weighted":
        target, externals = ds.split(target_label)
        ws = build_weighted_sample(target, externals, truncation_percentile, ridge=ridge)
        # split() orders the target first, then the other labels in order of appearance
        order = [target_label] + [lab for lab in ds.labels() if lab != target_label]
        rows = np.concatenate([np.flatnonzero(ds.subgroup == lab) for lab in order])
        return ws.data, ws.weights, rows
    raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


def _fit_predict(ds, target_label, method, X_eval, trunc, ridge, lmbda):
    train, w, rows = _training_sample(ds, target_label, method, trunc, ridge)
    fit = fit_weighted_linear(train.covariates, train.outcome, w)
    pred = predict_linear(fit, X_eval)
    return (pred if lmbda is None else inverse_box_cox(pred, lmbda)), w, rows


def _resample_indices(groups: np.ndarray, rng: np.random.Generator, labels) -> np.ndarray:
    parts = []
    for lab in labels:
        rows = np.flatnonzero(groups == lab)
        parts.append(rows[rng.integers(0, len(rows), size=len(rows))])
    return np.concatenate(parts)


def replicate_rng(seed: int, b: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(b,))))


def bootstrap_632plus(
    data: Dataset,
    target_label,
    methods=METHODS,
    B: int = 1000,
    loss: str = "absolute",
    seed: int = 0,
    boxcox_lambda: float | None = None,
    truncation_percentile: float | None = None,
    ridge: float = 1e-6,
) -> BootstrapReport:
    """.632+ bootstrap prediction error for the target subgroup.

    All methods share the same resampled indices in every replicate.
    """
    if isinstance(methods, str):
        methods = (methods,)
    methods = tuple(methods)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    if B < 1:
        raise ValueError("B must be >= 1")
    if loss not in LOSSES:
        raise ValueError(f"unknown loss {loss!r}; choose from {', '.join(LOSSES)}")
    target = data.select(target_label)
    if target.n < data.d + 2:
        raise ValueError(
            f"target subgroup has {target.n} rows; at least {data.d + 2} are required"
        )
    if "weighted" in methods and len(data.labels()) < 2:
        raise ValueError("weighted method needs at least one external subgroup")

    y_orig = data.outcome
    work = data
    if boxcox_lambda is not None:
        work = Dataset(data.covariates, box_cox(y_orig, boxcox_lambda), data.subgroup,
                       data.feature_names)
    tgt_rows = np.flatnonzero(data.subgroup == target_label)
    X_t = data.covariates[tgt_rows]
    y_t = y_orig[tgt_rows]
    n_t = len(tgt_rows)
    labels = data.labels()

    full = {}
    for m in methods:
        full[m] = _fit_predict(work, target_label, m, X_t, truncation_percentile, ridge,
                               boxcox_lambda)

    losses = {m: np.full((B, n_t), np.nan) for m in methods}
    abs_err = {m: np.full((B, n_t), np.nan) for m in methods}
    failed = {m: 0 for m in methods}
    pos_in_target = np.full(data.n, -1)
    pos_in_target[tgt_rows] = np.arange(n_t)
    for b in range(B):
        idx = _resample_indices(data.subgroup, replicate_rng(seed, b), labels)
        drawn = np.zeros(n_t, dtype=bool)
        drawn[pos_in_target[idx[pos_in_target[idx] >= 0]]] = True
        oob = np.flatnonzero(~drawn)
        if len(oob) == 0:
            continue
        boot = work.take(idx)
        for m in methods:
            try:
                pred, _, _ = _fit_predict(boot, target_label, m, X_t[oob], truncation_percentile,
                                          ridge, boxcox_lambda)
            except SimWeightsError as exc:
                logger.debug("replicate %d failed for %s: %s", b, m, exc)
                failed[m] += 1
                continue
            losses[m][b, oob] = _loss(loss, pred, y_t[oob])
            abs_err[m][b, oob] = np.abs(pred - y_t[oob])

    report_methods = {}
    for m in methods:
        pred, w, rows = full[m]
        apparent = float(np.mean(_loss(loss, pred, y_t)))
        gamma = float(np.mean(_loss(loss, pred[None, :], y_t[:, None])))
        per_row = _oob_row_means(losses[m])
        oob_err = float(np.mean(per_row[np.isfinite(per_row)])) if np.any(np.isfinite(per_row)) \
            else math.nan
        if math.isfinite(oob_err):
            est, r, w632, degenerate = estimate_632plus(apparent, oob_err, gamma)
        else:
            est, r, w632, degenerate = math.nan, math.nan, math.nan, not gamma > apparent
        mae, p05, p95, n_oob = _bands(abs_err[m])
        report_methods[m] = MethodEstimate(
            method=m,
            estimate=est,
            apparent=apparent,
            oob=oob_err,
            gamma=gamma,
            relative_overfitting=r,
            weight_632=w632,
            degenerate_gamma=degenerate,
            n_train=int(len(rows)),
            ess=effective_sample_size(w),
            failed_replicates=failed[m],
            mae=mae,
            mae_p05=p05,
            mae_p95=p95,
            n_oob=n_oob,
            bands_degenerate=bool(np.any(n_oob < 2)),
            cdf=weighted_cdf(y_orig[rows], w),
            oob_losses=losses[m],
        )
    return BootstrapReport(
        target_label=target_label,
        B=B,
        loss=loss,
        boxcox_lambda=boxcox_lambda,
        seed=seed,
        target_outcome=y_t,
        methods=report_methods,
    )


def _oob_row_means(losses: np.ndarray) -> np.ndarray:
    counts = np.sum(np.isfinite(losses), axis=0)
    sums = np.nansum(losses, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


def _bands(abs_err: np.ndarray):
    n_t = abs_err.shape[1]
    mae = np.full(n_t, np.nan)
    p05 = np.full(n_t, np.nan)
    p95 = np.full(n_t, np.nan)
    n_oob = np.sum(np.isfinite(abs_err), axis=0)
    for i in range(n_t):
        col = abs_err[:, i]
        col = col[np.isfinite(col)]
        if len(col):
            mae[i] = col.mean()
            p05[i], p95[i] = np.percentile(col, [5, 95])
    return mae, p05, p95, n_oob
