"""Simulation study: compare weighted, propensity-only, local and global training samples.

Each cell of the grid simulates a target subgroup plus ``external_count``
shifted subgroups, trains a linear model on four training samples and
scores all of them on the same fresh target test draw:

* ``local``    target rows only
* ``global``   all rows pooled with unit weights
* ``weighted`` target rows at weight 1, external rows at p / max(AUC, 0.5)
* ``p_only``   as ``weighted`` without the AUC adjustment

Every (cell, replicate) pair draws from the stream
``SeedSequence(master_seed, spawn_key=(cell_index, replicate, ...))`` so
results do not depend on execution order or worker count.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .exceptions import NumericalFailure, SimWeightsError
from .glm import fit_weighted_linear, predict_linear, rmse
from .scm import ScenarioKind, ScenarioSpec, make_shift_vector, simulate, simulate_target_test
from .weights import build_weighted_sample

logger = logging.getLogger(__name__)

SAMPLE_TYPES = ("weighted", "p_only", "local", "global")
SIMILARITIES = ("similar", "medium", "dissimilar")


@dataclass(frozen=True)
class GridSpec:
    kinds: tuple = tuple(k.value for k in ScenarioKind)
    similarities: tuple = SIMILARITIES
    external_counts: tuple = (1, 3, 5, 7)
    external_sizes: tuple = (10, 30, 50)
    target_sizes: tuple = (10, 15, 20)
    k: int = 3
    c: int = 1
    replicates: int = 30
    n_test: int = 100
    master_seed: int = 2024
    truncation_percentile: float | None = None

    def __post_init__(self):
        for name in ("kinds", "similarities", "external_counts", "external_sizes", "target_sizes"):
            values = tuple(getattr(self, name))
            if not values:
                raise ValueError(f"{name} must be nonempty")
            object.__setattr__(self, name, values)
        object.__setattr__(
            self, "kinds", tuple(ScenarioKind.parse(k).value for k in self.kinds)
        )
        for s in self.similarities:
            if s not in SIMILARITIES:
                raise ValueError(f"unknown similarity {s!r}")
        if any(int(v) < 1 for v in self.external_counts + self.external_sizes + self.target_sizes):
            raise ValueError("counts and sizes must be positive")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.n_test < 1:
            raise ValueError("n_test must be >= 1")

    def cells(self) -> list:
        """Grid coordinates in enumeration order (replicate excluded)."""
        return [
            CellCoords(kind, sim, int(m), int(ne), int(nt))
            for kind, sim, m, ne, nt in itertools.product(
                self.kinds,
                self.similarities,
                self.external_counts,
                self.external_sizes,
                self.target_sizes,
            )
        ]


@dataclass(frozen=True)
class CellCoords:
    kind: str
    similarity: str
    external_count: int
    external_size: int
    target_size: int


@dataclass(frozen=True)
class CellTask:
    coords: CellCoords
    cell_index: int
    replicate: int
    master_seed: int
    k: int = 3
    c: int = 1
    n_test: int = 100
    truncation_percentile: float | None = None
    force_unit_weights: bool = False


@dataclass(frozen=True)
class CellResult:
    kind: str
    similarity: str
    external_count: int
    external_size: int
    target_size: int
    replicate: int
    cell_index: int
    rmse_weighted: float
    rmse_p_only: float
    rmse_local: float
    rmse_global: float
    ess_weighted: float
    ess_p_only: float
    ess_ratio_rounded: int
    failed_subgroups: int = 0
    error: str = ""

    @property
    def ess_ratio(self) -> float:
        return self.ess_weighted / self.target_size

    def rmse_for(self, sample: str) -> float:
        return getattr(self, f"rmse_{sample}")


CSV_COLUMNS = [f.name for f in fields(CellResult)]


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def run_cell(task: CellTask) -> CellResult:
    """Simulate one replicate of one grid cell and score the four samples."""
    co = task.coords
    shifts = make_shift_vector(co.external_count, co.similarity)
    spec = ScenarioSpec(
        kind=co.kind,
        shift_vector=shifts,
        subgroup_sizes=[co.target_size] + [co.external_size] * co.external_count,
        k=task.k,
        c=task.c,
        seed=task.master_seed,
        stream=(task.cell_index, task.replicate),
    )
    train = simulate(spec).data
    test = simulate_target_test(spec, task.n_test)
    target, externals = train.split(0)

    errors = []

    def score(X, y, w=None):
        try:
            fit = fit_weighted_linear(X, y, w)
        except NumericalFailure as exc:
            errors.append(str(exc))
            return math.nan
        return rmse(predict_linear(fit, test.covariates), test.outcome)

    rmse_local = score(target.covariates, target.outcome)
    rmse_global = score(train.covariates, train.outcome)

    failed = 0
    results = {}
    for name, adjust in (("weighted", True), ("p_only", False)):
        try:
            ws = build_weighted_sample(
                target, externals, task.truncation_percentile, adjust_auc=adjust
            )
        except SimWeightsError as exc:
            errors.append(f"{name}: {exc}")
            results[name] = (math.nan, math.nan)
            continue
        w = np.ones(ws.data.n) if task.force_unit_weights else ws.weights
        ess = ws.ess if not task.force_unit_weights else float(ws.data.n)
        if name == "weighted":
            failed = len(ws.failed)
        results[name] = (score(ws.data.covariates, ws.data.outcome, w), ess)

    ess_w = results["weighted"][1]
    ratio = round_half_up(ess_w / co.target_size) if math.isfinite(ess_w) else -1
    return CellResult(
        kind=co.kind,
        similarity=co.similarity,
        external_count=co.external_count,
        external_size=co.external_size,
        target_size=co.target_size,
        replicate=task.replicate,
        cell_index=task.cell_index,
        rmse_weighted=results["weighted"][0],
        rmse_p_only=results["p_only"][0],
        rmse_local=rmse_local,
        rmse_global=rmse_global,
        ess_weighted=ess_w,
        ess_p_only=results["p_only"][1],
        ess_ratio_rounded=ratio,
        failed_subgroups=failed,
        error="; ".join(errors),
    )


def iter_tasks(spec: GridSpec):
    for idx, coords in enumerate(spec.cells()):
        for rep in range(spec.replicates):
            yield CellTask(
                coords=coords,
                cell_index=idx,
                replicate=rep,
                master_seed=spec.master_seed,
                k=spec.k,
                c=spec.c,
                n_test=spec.n_test,
                truncation_percentile=spec.truncation_percentile,
            )


@dataclass
class GridSummary:
    n_results: int
    average_rmse: dict
    average_ess_ratio: dict
    failed_counts: dict
    strata: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def run_grid(spec: GridSpec, jobs: int | None = 1, progress=None):
    """Run every cell and replicate of ``spec``.

    Parameters
    ----------
    spec : GridSpec
    jobs : int or None
        Worker processes; ``None`` uses all available CPUs, 1 runs inline.
    progress : callable, optional
        Called with the number of finished tasks.

    Returns
    -------
    results : list of CellResult
        Sorted by (cell_index, replicate).
    summary : GridSummary
    """
    tasks = list(iter_tasks(spec))
    if jobs is None:
        jobs = os.cpu_count() or 1
    results = []
    if jobs <= 1:
        for i, t in enumerate(tasks, 1):
            results.append(run_cell(t))
            if progress:
                progress(i)
    else:
        chunk = max(1, len(tasks) // (jobs * 8))
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for i, r in enumerate(pool.map(run_cell, tasks, chunksize=chunk), 1):
                results.append(r)
                if progress:
                    progress(i)
    results.sort(key=lambda r: (r.cell_index, r.replicate))
    return results, summarize(results)


def _nanmean(values) -> float | None:
    arr = np.asarray(values, dtype=float)
    arr = arr[np.isfinite(arr)]
    return float(arr.mean()) if len(arr) else None


def summarize(results) -> GridSummary:
    """Averages over completed results; NaN entries are skipped and counted."""
    results = list(results)
    avg_rmse, failed = {}, {}
    for s in SAMPLE_TYPES:
        vals = [r.rmse_for(s) for r in results]
        avg_rmse[s] = _nanmean(vals)
        failed[s] = int(sum(1 for v in vals if not math.isfinite(v)))
    avg_ess = {
        "weighted": _nanmean([r.ess_weighted / r.target_size for r in results]),
        "p_only": _nanmean([r.ess_p_only / r.target_size for r in results]),
    }
    failed["failed_subgroup_fits"] = int(sum(r.failed_subgroups for r in results))
    return GridSummary(
        n_results=len(results),
        average_rmse=avg_rmse,
        average_ess_ratio=avg_ess,
        failed_counts=failed,
        strata=summarize_by_ess_ratio(results) if results else [],
    )


def summarize_by_ess_ratio(results, samples=SAMPLE_TYPES) -> list:
    """RMSE quartiles and means per (rounded ESS ratio, similarity, kind, sample).

    Strata without finite values are omitted.
    """
    results = list(results)
    if not results:
        raise ValueError("no results to summarize")
    groups = {}
    for r in results:
        for s in samples:
            v = r.rmse_for(s)
            if math.isfinite(v):
                groups.setdefault((r.ess_ratio_rounded, r.similarity, r.kind, s), []).append(v)
    rows = []
    for (ratio, sim, kind, sample), vals in sorted(groups.items()):
        arr = np.asarray(vals)
        q1, med, q3 = np.percentile(arr, [25, 50, 75])
        rows.append(
            {
                "ess_ratio": ratio,
                "similarity": sim,
                "kind": kind,
                "sample": sample,
                "count": len(arr),
                "mean": float(arr.mean()),
                "q25": float(q1),
                "median": float(med),
                "q75": float(q3),
            }
        )
    return rows


def write_results_csv(results, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in results:
            row = []
            for name in CSV_COLUMNS:
                v = getattr(r, name)
                row.append(repr(v) if isinstance(v, float) else v)
            writer.writerow(row)


def read_results_csv(path) -> list:
    types = {f.name: f.type for f in fields(CellResult)}
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for name, text in row.items():
                t = types[name]
                if t == "float":
                    kw[name] = float(text)
                elif t == "int":
                    kw[name] = int(text)
                else:
                    kw[name] = text
            out.append(CellResult(**kw))
    return out


def write_summary_json(summary: GridSummary, path, spec: GridSpec | None = None) -> None:
    payload = summary.to_dict()
    if spec is not None:
        payload["grid"] = asdict(spec)
    Path(path).write_text(json.dumps(payload, indent=2, allow_nan=False) + "\n", encoding="utf-8")
