"""Feature vectors, feature matrices, imputation and variance pruning."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import DataError, EmptyMatrixError, SpecError
from .catalog import FeatureSpec, SeriesContext, compute_feature

MISSING_FILL = -999.0
VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class FeatureVector:
    names: tuple[str, ...]
    values: np.ndarray  # NaN marks a missing value

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if len(values) != len(self.names):
            raise DataError("names and values differ in length")
        if len(set(self.names)) != len(self.names):
            raise DataError("feature names must be unique")
        if np.any(np.isinf(values)):
            raise DataError("feature values must be finite or missing")
        values.setflags(write=False)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "values", values)

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    def as_dict(self) -> dict[str, float | None]:
        return {n: (None if math.isnan(v) else float(v)) for n, v in zip(self.names, self.values)}


def extract_all(signals, specs: Sequence[FeatureSpec], lead_names: Sequence[str] | None = None) -> FeatureVector:
    """Every spec on every lead; names are ``lead__group__param_value...``."""
    if not specs:
        raise SpecError("spec list is empty")
    x = np.asarray(signals, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise DataError("signals must be a series or a (leads, samples) matrix")
    if lead_names is None:
        lead_names = [f"lead{i}" for i in range(x.shape[0])] if x.shape[0] > 1 else ["lead0"]
    if len(lead_names) != x.shape[0]:
        raise DataError("one lead name per lead required")
    names, values = [], []
    for lead, row in zip(lead_names, x):
        ctx = SeriesContext(row)
        for spec in specs:
            names.append(f"{lead}__{spec.name}")
            v = compute_feature(spec, row, ctx)
            values.append(math.nan if v is None else v)
    return FeatureVector(tuple(names), np.asarray(values))


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    record_ids: tuple[str, ...]
    columns: tuple[str, ...]
    values: np.ndarray  # (records, features); NaN marks missing before imputation
    fill_value: float | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape != (len(self.record_ids), len(self.columns)):
            raise DataError(f"matrix shape {values.shape} does not match ids/columns")
        if len(set(self.columns)) != len(self.columns):
            raise DataError("column names must be unique")
        object.__setattr__(self, "record_ids", tuple(self.record_ids))
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def select(self, columns: Sequence[str]) -> "FeatureMatrix":
        """Reorder to ``columns``; absent columns are filled with the fill value (or missing)."""
        index = {c: i for i, c in enumerate(self.columns)}
        fill = math.nan if self.fill_value is None else self.fill_value
        out = np.full((len(self.record_ids), len(columns)), fill)
        for j, c in enumerate(columns):
            if c in index:
                out[:, j] = self.values[:, index[c]]
        return FeatureMatrix(self.record_ids, tuple(columns), out, self.fill_value)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["record_id", *self.columns])
        for rid, row in zip(self.record_ids, self.values):
            w.writerow([rid, *("" if math.isnan(v) else repr(float(v)) for v in row)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, fill_value: float | None = None) -> "FeatureMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or not rows[0] or rows[0][0] != "record_id":
            raise DataError("feature CSV must start with a record_id header")
        columns = tuple(rows[0][1:])
        ids, data = [], []
        for lineno, row in enumerate(rows[1:], start=2):
            if not row:
                continue
            if len(row) != len(columns) + 1:
                raise DataError(f"line {lineno}: expected {len(columns) + 1} fields, got {len(row)}")
            ids.append(row[0])
            try:
                data.append([math.nan if f == "" else float(f) for f in row[1:]])
            except ValueError as exc:
                raise DataError(f"line {lineno}: {exc}") from exc
        values = np.asarray(data, dtype=np.float64).reshape(len(ids), len(columns))
        return cls(tuple(ids), columns, values, fill_value)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "FeatureMatrix":
        return cls.from_csv(Path(path).read_text(encoding="utf-8"))


def _extract_job(args):
    signals, specs, lead_names = args
    return extract_all(signals, specs, lead_names)


def build_feature_matrix(
    records: Sequence[tuple[str, np.ndarray]],
    specs: Sequence[FeatureSpec],
    lead_names: Sequence[str] | None = None,
    jobs: int = 1,
) -> FeatureMatrix:
    """One row per ``(record_id, signals)`` pair; rows follow the input order.

    Each record is computed independently, so the result does not depend on
    ``jobs``.
    """
    tasks = [(sig, list(specs), lead_names) for _, sig in records]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            vectors = list(pool.map(_extract_job, tasks))
    else:
        vectors = [_extract_job(t) for t in tasks]
    if not vectors:
        columns = tuple(f"{lead}__{s.name}" for lead in (lead_names or ["lead0"]) for s in specs)
        return FeatureMatrix((), columns, np.empty((0, len(columns))))
    columns = vectors[0].names
    for v in vectors[1:]:
        if v.names != columns:
            raise DataError("records produced different feature names (lead counts differ?)")
    return FeatureMatrix(tuple(r for r, _ in records), columns, np.stack([v.values for v in vectors]))


def impute_and_prune(
    matrix: FeatureMatrix,
    fill: float = MISSING_FILL,
    variance_floor: float = VARIANCE_FLOOR,
) -> FeatureMatrix:
    """Replace missing values with ``fill``, then drop columns whose population
    variance is at most ``variance_floor``. Surviving columns keep their order."""
    values = np.where(np.isnan(matrix.values), fill, matrix.values)
    if values.shape[0] == 0:
        raise EmptyMatrixError("matrix has no records")
    var = np.var(values, axis=0)
    keep = var > variance_floor
    if not np.any(keep):
        raise EmptyMatrixError("every column fell below the variance floor")
    columns = tuple(c for c, k in zip(matrix.columns, keep) if k)
    return FeatureMatrix(matrix.record_ids, columns, values[:, keep], float(fill))
