"""Synthetic multi-subgroup data from three linear structural causal models.

Every subgroup ``g`` carries a deterministic mean shift ``a = v[g]``; the
target (subgroup 0) has ``v[0] = 0``. With independent standard normal
noise terms, global covariates are ``x_g,i = e`` and

=================  ==============  ===============  ==================================
kind               h               x_s,p            y
=================  ==============  ===============  ==================================
covariate          e_h             e + h + a        sum x_g + sum x_s + 2 h + e_y
outcome            e_h             e + h            sum x_g + sum x_s + 2 h + e_y + a
covariate_outcome  e_h + a         e + h            sum x_g + sum x_s + 2 h + e_y
=================  ==============  ===============  ==================================

The coefficients 1, 1 and 2 in ``y`` are configurable.

Random streams come from ``numpy.random.SeedSequence`` with a spawn key
per (stream prefix, subgroup) feeding a counter-based Philox generator, so
every subgroup of every replicate draws from its own reproducible stream
regardless of evaluation order. Normal deviates use numpy's ziggurat
sampler (``Generator.standard_normal``).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset

SIMILARITY_MAX_SHIFT = {"similar": 1.0, "medium": 2.0, "dissimilar": 3.0}

_TRAIN_STREAM = 0
_TEST_STREAM = 1
_MEMBERSHIP_STREAM = 2


class ScenarioKind(str, enum.Enum):
    COVARIATE = "covariate"
    OUTCOME = "outcome"
    COVARIATE_OUTCOME = "covariate_outcome"

    @classmethod
    def parse(cls, value) -> "ScenarioKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("+", "_").replace("-", "_")
        aliases = {"cov_out": "covariate_outcome", "covariate__outcome": "covariate_outcome"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown scenario kind {value!r}; choose from {choices}") from None


@dataclass(frozen=True)
class ScenarioSpec:
    """Parameters of one simulated training set.

    ``stream`` is an optional tuple of nonnegative integers prepended to
    every spawn key, letting a harness carve independent streams out of one
    master seed (e.g. ``(cell_index, replicate)``).
    """

    kind: ScenarioKind
    shift_vector: tuple
    subgroup_sizes: tuple
    k: int = 3
    c: int = 1
    seed: int = 0
    stream: tuple = ()
    membership: str = "blocks"
    coef_global: float = 1.0
    coef_specific: float = 1.0
    coef_hidden: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ScenarioKind.parse(self.kind))
        object.__setattr__(self, "shift_vector", tuple(float(v) for v in self.shift_vector))
        object.__setattr__(self, "subgroup_sizes", tuple(int(n) for n in self.subgroup_sizes))
        object.__setattr__(self, "stream", tuple(int(s) for s in self.stream))
        m = len(self.shift_vector)
        if m < 2:
            raise ValueError("need at least two subgroups (target plus one external)")
        if len(self.subgroup_sizes) != m:
            raise ValueError(
                f"{len(self.subgroup_sizes)} subgroup sizes for {m} shift values"
            )
        if any(n < 1 for n in self.subgroup_sizes):
            raise ValueError("subgroup sizes must be positive")
        if self.k < 1 or self.c < 0:
            raise ValueError("need k >= 1 subgroup-specific and c >= 0 global covariates")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.membership not in ("blocks", "categorical"):
            raise ValueError("membership must be 'blocks' or 'categorical'")

    @property
    def m(self) -> int:
        return len(self.shift_vector)

    @property
    def feature_names(self) -> tuple:
        return tuple(f"x_s{p + 1}" for p in range(self.k)) + tuple(
            f"x_g{i + 1}" for i in range(self.c)
        )


@dataclass(frozen=True)
class SimulatedData:
    data: Dataset
    true_shifts: np.ndarray
    hidden_h: np.ndarray = field(repr=False)


def make_shift_vector(num_external: int, similarity: str) -> np.ndarray:
    """Evenly spaced shifts from 0 (target) up to the similarity level's maximum.

    >>> make_shift_vector(3, "similar").round(2).tolist()
    [0.0, 0.33, 0.67, 1.0]
    """
    if num_external < 1:
        raise ValueError("need at least one external subgroup")
    try:
        top = SIMILARITY_MAX_SHIFT[similarity]
    except KeyError:
        raise ValueError(
            f"unknown similarity {similarity!r}; choose from {', '.join(SIMILARITY_MAX_SHIFT)}"
        ) from None
    return np.linspace(0.0, top, num_external + 1)


def _rng(spec: ScenarioSpec, *key) -> np.random.Generator:
    ss = np.random.SeedSequence(spec.seed, spawn_key=spec.stream + tuple(key))
    return np.random.Generator(np.random.Philox(ss))


def _draw_block(spec: ScenarioSpec, rng: np.random.Generator, n: int, a: float):
    k, c = spec.k, spec.c
    # columns: e_h, e_xs (k), e_xg (c), e_y
    eps = rng.standard_normal((n, k + c + 2))
    e_h = eps[:, 0]
    e_xs = eps[:, 1 : 1 + k]
    x_g = eps[:, 1 + k : 1 + k + c]
    e_y = eps[:, 1 + k + c]

    kind = spec.kind
    if kind is ScenarioKind.COVARIATE_OUTCOME:
        h = e_h + a
    else:
        h = e_h
    if kind is ScenarioKind.COVARIATE:
        x_s = e_xs + h[:, None] + a
    else:
        x_s = e_xs + h[:, None]
    y = (
        spec.coef_global * x_g.sum(axis=1)
        + spec.coef_specific * x_s.sum(axis=1)
        + spec.coef_hidden * h
        + e_y
    )
    if kind is ScenarioKind.OUTCOME:
        y = y + a
    return np.hstack([x_s, x_g]), y, h


def _block_sizes(spec: ScenarioSpec) -> list:
    if spec.membership == "blocks":
        return list(spec.subgroup_sizes)
    # membership ~ Categorical(1/m, ..., 1/m) over the same total size
    rng = _rng(spec, _MEMBERSHIP_STREAM)
    total = sum(spec.subgroup_sizes)
    draws = rng.integers(0, spec.m, size=total)
    return np.bincount(draws, minlength=spec.m).tolist()


def simulate(spec: ScenarioSpec) -> SimulatedData:
    """Generate training data for all subgroups of ``spec``.

    Rows are ordered by subgroup, labels are the integers ``0 .. m-1``.
    """
    Xs, ys, hs, labels = [], [], [], []
    for g, n in enumerate(_block_sizes(spec)):
        if n == 0:
            continue
        X, y, h = _draw_block(spec, _rng(spec, _TRAIN_STREAM, g), n, spec.shift_vector[g])
        Xs.append(X)
        ys.append(y)
        hs.append(h)
        labels.append(np.full(n, g))
    data = Dataset(
        np.vstack(Xs), np.concatenate(ys), np.concatenate(labels), spec.feature_names
    )
    return SimulatedData(
        data=data, true_shifts=np.asarray(spec.shift_vector), hidden_h=np.concatenate(hs)
    )


def simulate_target_test(spec: ScenarioSpec, n_test: int = 100) -> Dataset:
    """Fresh unshifted target data from a stream independent of the training draw."""
    if n_test < 1:
        raise ValueError("n_test must be positive")
    X, y, _ = _draw_block(spec, _rng(spec, _TEST_STREAM), n_test, 0.0)
    return Dataset(X, y, np.zeros(n_test, dtype=int), spec.feature_names)
