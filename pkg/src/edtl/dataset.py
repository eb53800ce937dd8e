"""Tabular datasets: CSV ingestion, scaling, splitting, subsampling and
synthetic sensor anomalies."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureSchema:
    names: tuple[str, ...]
    target_name: str

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if not self.names:
            raise DatasetError("schema needs at least one feature")
        if len(set(self.names)) != len(self.names):
            raise DatasetError(f"duplicate feature names in {self.names}")
        if self.target_name in self.names:
            raise DatasetError(f"target {self.target_name!r} is also a feature")

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def to_dict(self) -> dict:
        return {"names": list(self.names), "target_name": self.target_name}

    @classmethod
    def from_dict(cls, d: dict) -> FeatureSchema:
        return cls(tuple(d["names"]), d["target_name"])


@dataclass(frozen=True, eq=False)
class Dataset:
    schema: FeatureSchema
    rows: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        targets = np.asarray(self.targets, dtype=float)
        if rows.ndim == 1 and len(self.schema) == 1:
            rows = rows.reshape(-1, 1)
        if rows.ndim != 2 or targets.ndim != 1:
            raise DatasetError("rows must be 2-D and targets 1-D")
        if rows.shape[0] != targets.shape[0]:
            raise DatasetError(
                f"{rows.shape[0]} rows but {targets.shape[0]} targets")
        if rows.shape[1] != len(self.schema):
            raise DatasetError(
                f"{rows.shape[1]} columns but schema has {len(self.schema)}")
        if not (np.all(np.isfinite(rows)) and np.all(np.isfinite(targets))):
            raise DatasetError("non-finite values in dataset")
        rows.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "targets", targets)

    def __len__(self):
        return self.rows.shape[0]

    @property
    def n_features(self) -> int:
        return self.rows.shape[1]

    def take(self, idx) -> Dataset:
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.schema, self.rows[idx], self.targets[idx])

    def project(self, schema: FeatureSchema) -> Dataset:
        """Restrict to the features of ``schema`` (which must be a sub-schema)."""
        cols = [self.schema.index(n) for n in schema.names]
        return Dataset(schema, self.rows[:, cols], self.targets)

    def equals(self, other: Dataset) -> bool:
        return (self.schema == other.schema
                and np.array_equal(self.rows, other.rows)
                and np.array_equal(self.targets, other.targets))


@dataclass(frozen=True)
class ScalerParams:
    means: np.ndarray
    stdevs: np.ndarray
    target_mean: float
    target_stdev: float

    def transform_rows(self, rows: np.ndarray) -> np.ndarray:
        return (np.asarray(rows, dtype=float) - self.means) / self.stdevs

    def inverse_rows(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.stdevs + self.means

    def transform_targets(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y, dtype=float) - self.target_mean) / self.target_stdev

    def inverse_targets(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.target_stdev + self.target_mean

    def transform(self, ds: Dataset) -> Dataset:
        if len(self.means) != ds.n_features:
            raise DatasetError("scaler does not match dataset width")
        return Dataset(ds.schema, self.transform_rows(ds.rows),
                       self.transform_targets(ds.targets))

    def inverse(self, ds: Dataset) -> Dataset:
        return Dataset(ds.schema, self.inverse_rows(ds.rows),
                       self.inverse_targets(ds.targets))

    def to_dict(self) -> dict:
        return {"means": [float(v) for v in self.means],
                "stdevs": [float(v) for v in self.stdevs],
                "target_mean": float(self.target_mean),
                "target_stdev": float(self.target_stdev)}

    @classmethod
    def from_dict(cls, d: dict) -> ScalerParams:
        return cls(np.array(d["means"], dtype=float),
                   np.array(d["stdevs"], dtype=float),
                   float(d["target_mean"]), float(d["target_stdev"]))


@dataclass(frozen=True)
class AnomalySpec:
    row_fraction: float = 0.20
    sigma_ratio: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.row_fraction <= 1.0:
            raise DatasetError("row_fraction must lie in [0, 1]")
        if self.sigma_ratio < 0:
            raise DatasetError("sigma_ratio must be non-negative")


# -- I/O ---------------------------------------------------------------------

def load_csv(path, target: str | None = None) -> Dataset:
    """Read a headered CSV; ``target`` names the label column (default: last).

    Rows with an empty cell are dropped; any other non-numeric cell is an
    error naming its (1-based, header excluded) data row and column.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        if len(set(header)) != len(header):
            dup = sorted({h for h in header if header.count(h) > 1})
            raise DatasetError(f"{path}: duplicate column name(s) {dup}")
        if target is None:
            target = header[-1]
        if target not in header:
            raise DatasetError(f"{path}: target column {target!r} not found")
        values = []
        for rowno, rec in enumerate(reader, start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DatasetError(
                    f"{path}: row {rowno} has {len(rec)} cells, expected {len(header)}")
            if any(not c.strip() for c in rec):
                continue  # missing value: drop row
            parsed = []
            for col, cell in zip(header, rec):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise DatasetError(
                        f"{path}: non-numeric value {cell!r} at row {rowno}, column {col!r}"
                    ) from None
            values.append(parsed)
    if not values:
        raise DatasetError(f"{path}: no rows")
    arr = np.array(values, dtype=float)
    t = header.index(target)
    feats = [h for i, h in enumerate(header) if i != t]
    return Dataset(FeatureSchema(tuple(feats), target),
                   np.delete(arr, t, axis=1), arr[:, t])


def save_csv(ds: Dataset, path) -> None:
    """Write features then target; floats use shortest round-trip repr."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(ds.schema.names) + [ds.schema.target_name])
        for x, y in zip(ds.rows, ds.targets):
            w.writerow([repr(float(v)) for v in x] + [repr(float(y))])


# -- preprocessing -------------------------------------------------------------

def fit_scaler(ds: Dataset) -> ScalerParams:
    if len(ds) == 0:
        raise DatasetError("cannot standardize an empty dataset")
    means = ds.rows.mean(axis=0)
    stdevs = ds.rows.std(axis=0)
    stdevs = np.where(stdevs > 0, stdevs, 1.0)
    tstd = float(ds.targets.std())
    return ScalerParams(means, stdevs, float(ds.targets.mean()),
                        tstd if tstd > 0 else 1.0)


def fit_standardize(ds: Dataset) -> tuple[Dataset, ScalerParams]:
    """z-score features and target with population statistics of ``ds``."""
    scaler = fit_scaler(ds)
    return scaler.transform(ds), scaler


def split(ds: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    if not 0.0 < train_fraction < 1.0:
        raise DatasetError(f"train_fraction {train_fraction} not in (0, 1)")
    n = len(ds)
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(train_fraction * n))
    if n >= 2:
        n_train = min(max(n_train, 1), n - 1)
    return ds.take(np.sort(perm[:n_train])), ds.take(np.sort(perm[n_train:]))


def subsample_fraction(ds: Dataset, fraction: float, seed: int) -> Dataset:
    """Uniform sample without replacement of ``round(fraction * N)`` rows.

    Samples are prefixes of one seeded permutation, so for a fixed seed a
    smaller fraction is always a subset of a larger one.
    """
    if not 0.0 < fraction <= 1.0:
        raise DatasetError(f"fraction {fraction} not in (0, 1]")
    n = len(ds)
    perm = np.random.default_rng(seed).permutation(n)
    m = max(1, int(round(fraction * n)))
    return ds.take(np.sort(perm[:m]))


def inject_anomalies(ds: Dataset, spec: AnomalySpec) -> Dataset:
    """Add zero-mean Gaussian noise to every feature of a random subset of rows.

    The per-feature noise scale is ``sigma_ratio * mean(|x_j|)`` computed over
    the whole input, so call this on raw (unstandardized) data. Targets are
    left untouched.
    """
    n = len(ds)
    n_sel = int(round(spec.row_fraction * n))
    if n_sel == 0 or spec.sigma_ratio == 0:
        return ds
    rng = np.random.default_rng(spec.seed)
    sel = np.sort(rng.choice(n, size=n_sel, replace=False))
    sigma = spec.sigma_ratio * np.abs(ds.rows).mean(axis=0)
    rows = ds.rows.copy()
    rows[sel] += rng.normal(size=(n_sel, ds.n_features)) * sigma
    return Dataset(ds.schema, rows, ds.targets)


def anomalous_rows(clean: Dataset, noisy: Dataset) -> np.ndarray:
    """Indices of rows that differ between two aligned datasets."""
    return np.flatnonzero(np.any(clean.rows != noisy.rows, axis=1))


def feature_correlations(ds: Dataset) -> np.ndarray:
    """|Pearson r| of each feature with the target; constant columns give 0."""
    x = ds.rows - ds.rows.mean(axis=0)
    y = ds.targets - ds.targets.mean()
    sx = np.sqrt((x * x).sum(axis=0))
    sy = math.sqrt(float(y @ y))
    num = np.abs(x.T @ y)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where((sx > 0) & (sy > 0), num / (sx * sy), 0.0)
    return r


def select_features(ds: Dataset, k: int) -> FeatureSchema:
    """Keep the ``k`` features most correlated (in absolute value) with the target.

    Ties go to the feature listed first; the result keeps schema order.
    """
    if not 1 <= k <= ds.n_features:
        raise DatasetError(f"k={k} outside 1..{ds.n_features}")
    r = feature_correlations(ds)
    order = sorted(range(ds.n_features), key=lambda j: (-r[j], j))
    keep = sorted(order[:k])
    return FeatureSchema(tuple(ds.schema.names[j] for j in keep),
                         ds.schema.target_name)
