"""Tabular container shared by all modules, plus the CSV schema.

CSV schema: a header row is required. Column ``subgroup`` holds string
labels, column ``y`` the outcome; every other column is a covariate, kept
in file order. Comma delimited, UTF-8, ``.`` as decimal point, no missing
values.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import (
    CsvFormatError,
    DataError,
    DimensionMismatch,
    EmptyInput,
    LengthMismatch,
    SchemaMismatch,
    UnknownSubgroup,
)

SUBGROUP_COLUMN = "subgroup"
OUTCOME_COLUMN = "y"


@dataclass(frozen=True)
class Dataset:
    """Covariates, outcome and subgroup labels for ``n`` observations.

    Parameters
    ----------
    covariates : array-like of shape (n, d)
    outcome : array-like of shape (n,)
    subgroup : array-like of shape (n,)
        Categorical labels; any hashable scalars.
    feature_names : list of str, optional
        Defaults to ``x1 .. xd``.
    """

    covariates: np.ndarray
    outcome: np.ndarray
    subgroup: np.ndarray
    feature_names: tuple = field(default=())

    def __post_init__(self):
        X = np.asarray(self.covariates, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise DimensionMismatch(f"covariates must be 2-D, got {X.ndim}-D")
        y = np.asarray(self.outcome, dtype=float).ravel()
        s = np.asarray(self.subgroup)
        if s.ndim != 1:
            s = s.ravel()
        n, d = X.shape
        if n < 1 or d < 1:
            raise EmptyInput(f"need n >= 1 and d >= 1, got n={n}, d={d}")
        if len(y) != n or len(s) != n:
            raise LengthMismatch(
                f"covariates have {n} rows but outcome has {len(y)} and subgroup {len(s)}"
            )
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("covariates and outcome must be finite")
        names = tuple(self.feature_names) or tuple(f"x{i + 1}" for i in range(d))
        if len(names) != d:
            raise DimensionMismatch(f"{len(names)} feature names for {d} columns")
        X = X.copy()
        y = y.copy()
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "covariates", X)
        object.__setattr__(self, "outcome", y)
        object.__setattr__(self, "subgroup", s.copy())
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def d(self) -> int:
        return self.covariates.shape[1]

    def labels(self) -> list:
        """Distinct subgroup labels in order of first appearance."""
        seen = {}
        for lab in self.subgroup.tolist():
            seen.setdefault(lab, None)
        return list(seen)

    def take(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(
            self.covariates[index],
            self.outcome[index],
            self.subgroup[index],
            self.feature_names,
        )

    def select(self, label) -> "Dataset":
        """Rows belonging to subgroup ``label``."""
        mask = self.subgroup == label
        if not np.any(mask):
            raise UnknownSubgroup(
                f"subgroup {label!r} not found; available: {self.labels()}"
            )
        return self.take(np.flatnonzero(mask))

    def split(self, target) -> tuple["Dataset", list["Dataset"]]:
        """Return the target subgroup and the remaining subgroups in label order."""
        tgt = self.select(target)
        others = [self.select(lab) for lab in self.labels() if lab != target]
        return tgt, others

    def check_schema(self, other: "Dataset") -> None:
        if self.feature_names != other.feature_names:
            raise SchemaMismatch(
                f"feature schemas differ: {list(self.feature_names)} vs {list(other.feature_names)}"
            )

    @classmethod
    def concat(cls, parts) -> "Dataset":
        parts = list(parts)
        if not parts:
            raise EmptyInput("nothing to concatenate")
        for p in parts[1:]:
            parts[0].check_schema(p)
        return cls(
            np.vstack([p.covariates for p in parts]),
            np.concatenate([p.outcome for p in parts]),
            np.concatenate([p.subgroup for p in parts]),
            parts[0].feature_names,
        )


def _format_float(v: float) -> str:
    # repr round-trips exactly
    return repr(float(v))


def write_csv(dataset: Dataset, path, extra_columns=None) -> None:
    """Write ``dataset`` in the package CSV schema.

    ``extra_columns`` is an optional mapping name -> vector inserted after
    ``subgroup`` (used for per-row weights).
    """
    extra = dict(extra_columns or {})
    header = [SUBGROUP_COLUMN, *extra, OUTCOME_COLUMN, *dataset.feature_names]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    cols = [np.asarray(v, dtype=float) for v in extra.values()]
    for i in range(dataset.n):
        row = [str(dataset.subgroup[i])]
        row += [_format_float(c[i]) for c in cols]
        row.append(_format_float(dataset.outcome[i]))
        row += [_format_float(v) for v in dataset.covariates[i]]
        writer.writerow(row)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_csv(path) -> Dataset:
    """Parse a CSV file in the package schema.

    Raises
    ------
    CsvFormatError
        On the first schema violation, naming the data row and column.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_csv(fh)


def parse_csv(fh) -> Dataset:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise CsvFormatError("empty file; a header row is required") from None
    header = [h.strip() for h in header]
    if SUBGROUP_COLUMN not in header:
        raise CsvFormatError("missing required column", column=SUBGROUP_COLUMN)
    if OUTCOME_COLUMN not in header:
        raise CsvFormatError("missing required column", column=OUTCOME_COLUMN)
    if len(set(header)) != len(header):
        raise CsvFormatError("duplicate column names in header")
    s_idx = header.index(SUBGROUP_COLUMN)
    y_idx = header.index(OUTCOME_COLUMN)
    x_idx = [i for i in range(len(header)) if i not in (s_idx, y_idx)]
    if not x_idx:
        raise CsvFormatError("at least one covariate column is required")

    labels, ys, xs = [], [], []
    for rowno, row in enumerate(reader, start=1):
        if not row:
            continue
        if len(row) != len(header):
            raise CsvFormatError(
                f"expected {len(header)} fields, found {len(row)}", row=rowno
            )
        lab = row[s_idx].strip()
        if lab == "":
            raise CsvFormatError("missing value", row=rowno, column=SUBGROUP_COLUMN)
        labels.append(lab)
        ys.append(_parse_number(row[y_idx], rowno, OUTCOME_COLUMN))
        xs.append([_parse_number(row[i], rowno, header[i]) for i in x_idx])
    if not labels:
        raise CsvFormatError("no data rows")
    return Dataset(
        np.array(xs, dtype=float),
        np.array(ys, dtype=float),
        np.array(labels, dtype=object),
        tuple(header[i] for i in x_idx),
    )


def _parse_number(text: str, row: int, column: str) -> float:
    text = text.strip()
    if text == "":
        raise CsvFormatError("missing value", row=row, column=column)
    try:
        value = float(text)
    except ValueError:
        raise CsvFormatError(f"not a number: {text!r}", row=row, column=column) from None
    if not math.isfinite(value):
        raise CsvFormatError(f"non-finite value {text!r}", row=row, column=column)
    return value
