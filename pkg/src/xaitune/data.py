"""Tabular regression data: ingestion, train/validation/test split, scaling."""

from __future__ import annotations

import csv
import gzip
import io
import logging
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, IngestionError

logger = logging.getLogger(__name__)

DATA_DIR_ENV = "XAITUNE_DATA_DIR"
FIXTURE_NAME = "california_2000.csv"


@dataclass
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    feature_names: list[str]
    target_name: str = "target"
    skipped: int = 0

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float).ravel()
        if self.features.ndim != 2 or len(self.features) != len(self.targets):
            raise IngestionError("features must be 2-D with one row per target")
        if self.features.shape[1] != len(self.feature_names):
            raise IngestionError("feature name count does not match feature columns")

    def __len__(self):
        return len(self.targets)

    @property
    def n_features(self):
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.targets[idx], list(self.feature_names),
                       self.target_name)


def _open_text(path: Path):
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, encoding="utf-8", newline="")


def load_table(path, target: str | None = None) -> Dataset:
    """Read a comma-separated table with a header row.

    The target column is ``target`` if given, otherwise the last column.
    Rows holding a non-finite value are dropped and counted in
    ``Dataset.skipped``.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"{path}: no such file")
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise IngestionError(f"{path}: empty file")
        header = [h.strip() for h in header]
        try:
            [float(h) for h in header]
        except ValueError:
            pass
        else:
            raise IngestionError(f"{path}:1: missing header row")
        if len(header) < 2:
            raise IngestionError(f"{path}:1: need at least one feature and one target column")
        if target is None:
            t_col = len(header) - 1
        elif target in header:
            t_col = header.index(target)
        else:
            raise IngestionError(f"{path}:1: target column {target!r} not in header")

        rows, skipped = [], 0
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise IngestionError(
                    f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}")
            try:
                values = [float(v) for v in row]
            except ValueError as exc:
                raise IngestionError(f"{path}:{lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in values):
                skipped += 1
                continue
            rows.append(values)

    if skipped:
        logger.warning("%s: skipped %d row(s) with non-finite values", path, skipped)
    table = np.array(rows, dtype=float).reshape(len(rows), len(header))
    feat_cols = [j for j in range(len(header)) if j != t_col]
    return Dataset(table[:, feat_cols], table[:, t_col], [header[j] for j in feat_cols],
                   header[t_col], skipped=skipped)


def write_table(ds: Dataset, path):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*ds.feature_names, ds.target_name])
        for x, y in zip(ds.features, ds.targets):
            w.writerow([repr(float(v)) for v in x] + [repr(float(y))])


def fixture_path() -> Path:
    """Location of the bundled 2,000-row California Housing subsample."""
    return Path(str(resources.files("xaitune.datasets").joinpath(FIXTURE_NAME)))


def resolve_data_path(path) -> Path:
    """Resolve ``path``; the name ``fixture`` means the bundled sample.

    Relative paths that do not exist are looked up in ``$XAITUNE_DATA_DIR``.
    """
    if path in (None, "fixture"):
        return fixture_path()
    p = Path(path)
    if not p.is_absolute() and not p.exists() and os.environ.get(DATA_DIR_ENV):
        return Path(os.environ[DATA_DIR_ENV]) / p
    return p


@dataclass
class Splits:
    """Train/validation/test partition with test-access accounting.

    Reading :attr:`test` increments :attr:`test_accesses`; the tuner must
    never do so.
    """

    train: Dataset
    validation: Dataset
    _test: Dataset
    indices: dict = field(default_factory=dict)
    test_accesses: int = 0

    @property
    def test(self) -> Dataset:
        self.test_accesses += 1
        return self._test


def split(ds: Dataset, fractions=(0.6, 0.2, 0.2), seed: int = 0) -> Splits:
    """Shuffled disjoint partition; rounding remainders go to training."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) < 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigurationError(f"split fractions must be three non-negatives summing to 1, got {fractions}")
    n = len(ds)
    if n < 3:
        raise ConfigurationError(f"need at least 3 rows to split, got {n}")
    n_val = int(math.floor(fractions[1] * n + 1e-9))
    n_test = int(math.floor(fractions[2] * n + 1e-9))
    perm = np.random.default_rng(seed).permutation(n)
    test_idx = perm[:n_test]
    val_idx = perm[n_test:n_test + n_val]
    train_idx = perm[n_test + n_val:]
    return Splits(ds.subset(train_idx), ds.subset(val_idx), ds.subset(test_idx),
                  indices={"train": train_idx.tolist(), "validation": val_idx.tolist(),
                           "test": test_idx.tolist()})


@dataclass
class StandardScaler:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, features):
        return scaler_apply(self, features)

    def inverse_transform(self, features):
        return np.asarray(features, dtype=float) * self.std + self.mean


def scaler_fit(features, feature_names=None) -> StandardScaler:
    """Per-column mean and population standard deviation."""
    features = np.asarray(features, dtype=float)
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    bad = np.flatnonzero(~(std > 0))
    if len(bad):
        names = feature_names or [f"column {j}" for j in range(features.shape[1])]
        raise ConfigurationError(f"zero-variance feature {names[bad[0]]!r} cannot be standardized")
    return StandardScaler(mean, std)


def scaler_apply(scaler: StandardScaler, features) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    if features.shape[-1] != len(scaler.mean):
        raise ConfigurationError(
            f"scaler fitted on {len(scaler.mean)} features, got {features.shape[-1]}")
    return (features - scaler.mean) / scaler.std


def standardize(splits: Splits) -> tuple[Splits, StandardScaler]:
    """Fit a scaler on the training features and apply it to every split.

    The test split is transformed without going through the access counter.
    """
    sc = scaler_fit(splits.train.features, splits.train.feature_names)

    def tr(ds):
        return Dataset(scaler_apply(sc, ds.features), ds.targets, ds.feature_names,
                       ds.target_name)

    out = Splits(tr(splits.train), tr(splits.validation), tr(splits._test), splits.indices)
    return out, sc
