"""In-memory tables, CSV ingestion and preprocessing."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ContractError, NumericError, SchemaError

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DataTable:
    """Feature matrix with optional integer labels.

    Arrays are made read-only on construction; derive new tables with
    :meth:`take` or :meth:`with_features` instead of mutating.
    """

    features: np.ndarray
    feature_names: tuple[str, ...]
    labels: np.ndarray | None = None
    class_names: tuple[str, ...] | None = None

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64)
        if x.ndim != 2:
            raise SchemaError(f"features must be 2-D, got shape {x.shape}")
        x.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if len(self.feature_names) != x.shape[1]:
            raise SchemaError(
                f"{len(self.feature_names)} feature names for {x.shape[1]} columns"
            )
        if self.labels is not None:
            y = np.array(self.labels, dtype=np.int64)
            if y.shape != (x.shape[0],):
                raise SchemaError(f"labels shape {y.shape} does not match {x.shape[0]} rows")
            if self.class_names is None:
                raise SchemaError("labels given without class names")
            object.__setattr__(self, "class_names", tuple(self.class_names))
            if y.size and (y.min() < 0 or y.max() >= len(self.class_names)):
                raise SchemaError("label index outside the class-name range")
            y.setflags(write=False)
            object.__setattr__(self, "labels", y)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return 0 if self.class_names is None else len(self.class_names)

    def take(self, idx) -> "DataTable":
        idx = np.asarray(idx, dtype=np.int64)
        return DataTable(
            self.features[idx],
            self.feature_names,
            None if self.labels is None else self.labels[idx],
            self.class_names,
        )

    def with_features(self, features, feature_names=None) -> "DataTable":
        return DataTable(
            features,
            self.feature_names if feature_names is None else feature_names,
            self.labels,
            self.class_names,
        )

    def unlabeled(self) -> "DataTable":
        return DataTable(self.features, self.feature_names)


def load_csv(path, label_column: str | None = None) -> DataTable:
    """Read a headed CSV with one sample per row.

    Labels are mapped to class indices in order of first appearance.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row expected") from None
        label_idx = None
        if label_column is not None:
            if label_column not in header:
                raise SchemaError(f"{path}: label column {label_column!r} not in header")
            label_idx = header.index(label_column)
        feat_cols = [i for i in range(len(header)) if i != label_idx]
        names = [header[i] for i in feat_cols]

        rows: list[list[float]] = []
        raw_labels: list[str] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(
                    f"{path}:{lineno}: ragged row with {len(row)} cells, header has {len(header)}"
                )
            values = []
            for i in feat_cols:
                cell = row[i].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise SchemaError(
                        f"{path}:{lineno}: non-numeric cell {cell!r} in column {header[i]!r}"
                    ) from None
                if not math.isfinite(v):
                    raise NumericError(
                        f"{path}:{lineno}: non-finite value {cell!r} in column {header[i]!r}"
                    )
                values.append(v)
            rows.append(values)
            if label_idx is not None:
                raw_labels.append(row[label_idx].strip())

    features = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
    if label_idx is None:
        return DataTable(features, names)
    classes: dict[str, int] = {}
    labels = [classes.setdefault(v, len(classes)) for v in raw_labels]
    return DataTable(features, names, np.array(labels, dtype=np.int64), tuple(classes))


@dataclass
class PreprocessStats:
    """Per-feature statistics fitted on the pretraining partition."""

    mean: np.ndarray
    std: np.ndarray
    log2: bool = True
    zero_variance: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "log2": self.log2,
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "zero_variance": list(self.zero_variance),
        }

    @classmethod
    def from_json(cls, d: dict) -> "PreprocessStats":
        return cls(np.array(d["mean"]), np.array(d["std"]), d["log2"], list(d["zero_variance"]))


def _log_transform(x: np.ndarray, enabled: bool) -> np.ndarray:
    if not enabled:
        return x
    if (x < 0).any():
        raise ContractError("log2 transform needs non-negative counts")
    return np.log2(x + 1.0)


def _standardize(x, mean, std):
    safe = np.where(std > 0, std, 1.0)
    return np.where(std > 0, (x - mean) / safe, 0.0)


def preprocess(table: DataTable, stats: PreprocessStats | None = None, log2: bool = True):
    """``log2(x + 1)`` followed by a per-feature z-score (population std).

    With ``stats`` given they are applied as-is and never refit, so
    fine-tune and test partitions reuse the pretraining statistics.
    Zero-variance features map to 0 and are listed in ``stats.zero_variance``.
    Returns ``(table, stats)``.
    """
    if stats is None:
        x = _log_transform(table.features, log2)
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        # a constant column can leave round-off in the mean; treat it as exactly constant
        std[std <= 1e-12 * np.maximum(1.0, np.abs(mean))] = 0.0
        dead = [table.feature_names[j] for j in np.flatnonzero(std == 0)]
        if dead:
            log.warning("%d zero-variance feature(s) standardized to 0: %s",
                        len(dead), ", ".join(dead[:5]))
        stats = PreprocessStats(mean, std, log2, dead)
    else:
        if stats.mean.shape != (table.n_features,):
            raise SchemaError(
                f"stats cover {stats.mean.shape[0]} features, table has {table.n_features}"
            )
        x = _log_transform(table.features, stats.log2)
    return table.with_features(_standardize(x, stats.mean, stats.std)), stats


def common_features(a: DataTable, b: DataTable) -> tuple[DataTable, DataTable]:
    """Restrict both tables to their shared feature names, in ``a``'s column order."""
    for t in (a, b):
        if len(set(t.feature_names)) != t.n_features:
            raise SchemaError("duplicate feature names")
    in_b = {n: j for j, n in enumerate(b.feature_names)}
    ia = [j for j, n in enumerate(a.feature_names) if n in in_b]
    if not ia:
        raise SchemaError("the two tables share no feature names")
    shared = [a.feature_names[j] for j in ia]
    ib = [in_b[n] for n in shared]
    return (
        a.with_features(a.features[:, ia], shared),
        b.with_features(b.features[:, ib], shared),
    )
