"""Domain containers, delimited-text loading, preprocessing and synthetic shift data."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np


class DataError(ValueError):
    """Raised for malformed input data or invalid preprocessing requests."""


@dataclass(frozen=True)
class LabeledDomain:
    """Samples-as-rows feature matrix with optional 1-based integer labels."""

    features: np.ndarray
    labels: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        X = np.array(self.features, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError(f"features must be a non-empty 2-D matrix, got shape {X.shape}")
        X.setflags(write=False)
        object.__setattr__(self, "features", X)
        if self.labels is not None:
            y = np.asarray(self.labels)
            if y.ndim != 1 or y.shape[0] != X.shape[0]:
                raise DataError(f"labels must have length {X.shape[0]}, got shape {y.shape}")
            if y.dtype.kind == "f":
                if not np.all(np.isfinite(y)) or np.any(y != np.round(y)):
                    raise DataError("labels must be integer valued")
            y = y.astype(np.int64)
            if np.any(y < 1):
                bad = int(np.flatnonzero(y < 1)[0])
                raise DataError(f"label {y[bad]} at row {bad + 1} is outside 1..C")
            y.setflags(write=False)
            object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    @property
    def num_classes(self) -> int:
        return 0 if self.labels is None else int(self.labels.max())

    def without_labels(self) -> "LabeledDomain":
        return LabeledDomain(self.features, None, self.name)

    def subset(self, indices, name: Optional[str] = None) -> "LabeledDomain":
        idx = np.asarray(indices, dtype=np.int64)
        labels = None if self.labels is None else self.labels[idx]
        return LabeledDomain(self.features[idx], labels, self.name if name is None else name)


@dataclass(frozen=True)
class PreprocessSpec:
    standardize: bool = False
    pca_dims: Optional[int] = None
    # "source" fits z-score statistics on the source only, "pooled" on source and target.
    fit_on: str = "source"

    def __post_init__(self):
        if self.pca_dims is not None and self.pca_dims < 1:
            raise DataError("pca_dims must be a positive integer")
        if self.fit_on not in ("source", "pooled"):
            raise DataError(f"fit_on must be 'source' or 'pooled', got {self.fit_on!r}")


@dataclass(frozen=True)
class StandardizeStats:
    mean: np.ndarray
    std: np.ndarray


def _sniff_delimiter(header: str) -> str:
    return "\t" if header.count("\t") > header.count(",") else ","


def load_dataset(
    path: Union[str, Path],
    label_column: Union[str, int, None] = None,
    name: Optional[str] = None,
) -> LabeledDomain:
    """Read a delimited text table with one header row.

    The delimiter (comma or tab) is detected from the header line. When
    ``label_column`` is given, as a header name or a 0-based column index,
    that column becomes the integer label vector and every other column is
    a feature. Row numbers in error messages are 1-based data rows.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open("r", encoding="utf-8", newline="") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise DataError(f"{path}: missing header row")
        delim = _sniff_delimiter(header_line)
        header = next(csv.reader([header_line], delimiter=delim))
        header = [h.strip() for h in header]
        rows = [r for r in csv.reader(fh, delimiter=delim) if any(c.strip() for c in r)]

    label_idx = None
    if label_column is not None:
        if isinstance(label_column, str) and label_column in header:
            label_idx = header.index(label_column)
        else:
            try:
                label_idx = int(label_column)
            except (TypeError, ValueError):
                raise DataError(f"{path}: label column {label_column!r} not found in header") from None
            if not 0 <= label_idx < len(header):
                raise DataError(f"{path}: label column index {label_idx} out of range")

    if not rows:
        raise DataError(f"{path}: no data rows")
    values = np.empty((len(rows), len(header)), dtype=float)
    for i, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise DataError(f"{path}: row {i} has {len(row)} fields, expected {len(header)}")
        for j, cell in enumerate(row):
            try:
                values[i - 1, j] = float(cell)
            except ValueError:
                raise DataError(f"{path}: non-numeric value {cell.strip()!r} at row {i}, column {header[j]!r}") from None
        if not np.all(np.isfinite(values[i - 1])):
            raise DataError(f"{path}: non-finite value at row {i}")

    labels = None
    if label_idx is not None:
        raw = values[:, label_idx]
        for i, v in enumerate(raw, start=1):
            if v != round(v) or v < 1:
                raise DataError(f"{path}: label {v:g} at row {i} is outside 1..C")
        labels = raw.astype(np.int64)
        values = np.delete(values, label_idx, axis=1)
    if values.shape[1] == 0:
        raise DataError(f"{path}: no feature columns")
    return LabeledDomain(values, labels, name if name is not None else path.stem)


def save_dataset(domain: LabeledDomain, path: Union[str, Path], label_name: str = "label") -> None:
    """Write ``domain`` as comma-delimited text; labels, if any, go in the last column."""
    header = [f"f{j}" for j in range(domain.d)]
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header + ([label_name] if domain.has_labels else []))
        for i in range(domain.n):
            row = [repr(float(v)) for v in domain.features[i]]
            if domain.has_labels:
                row.append(str(int(domain.labels[i])))
            writer.writerow(row)


def fit_standardize(X: np.ndarray) -> StandardizeStats:
    X = np.asarray(X, dtype=float)
    return StandardizeStats(mean=X.mean(axis=0), std=X.std(axis=0))


def standardize(
    domain: LabeledDomain, stats: Optional[StandardizeStats] = None
) -> Tuple[LabeledDomain, StandardizeStats]:
    """Per-feature z-score with population standard deviation.

    Constant features (zero deviation) are mapped to 0. Passing ``stats``
    applies precomputed statistics, e.g. source-fit statistics to a target.
    """
    if stats is None:
        stats = fit_standardize(domain.features)
    if stats.mean.shape != (domain.d,) or stats.std.shape != (domain.d,):
        raise DataError(f"standardization stats have dimension {stats.mean.shape}, data has d={domain.d}")
    centered = domain.features - stats.mean
    # a constant column can still show a rounding-level deviation
    varying = stats.std > 16 * np.finfo(float).eps * np.abs(stats.mean)
    safe = np.where(varying, stats.std, 1.0)
    Z = np.where(varying, centered / safe, 0.0)
    return LabeledDomain(Z, domain.labels, domain.name), stats


def pca_reduce(
    source: LabeledDomain, target: LabeledDomain, dims: int
) -> Tuple[LabeledDomain, LabeledDomain]:
    """Project both domains onto the top principal directions of their pooled data."""
    if source.d != target.d:
        raise DataError(f"source has d={source.d}, target has d={target.d}")
    pooled = np.vstack([source.features, target.features])
    limit = min(pooled.shape[1], pooled.shape[0] - 1)
    if dims < 1 or dims > limit:
        raise DataError(f"pca dims must lie in 1..{limit}, got {dims}")
    mean = pooled.mean(axis=0)
    _, _, vt = np.linalg.svd(pooled - mean, full_matrices=False)
    basis = vt[:dims].T
    return (
        LabeledDomain((source.features - mean) @ basis, source.labels, source.name),
        LabeledDomain((target.features - mean) @ basis, target.labels, target.name),
    )


def preprocess(
    source: LabeledDomain, target: LabeledDomain, spec: PreprocessSpec
) -> Tuple[LabeledDomain, LabeledDomain]:
    if spec.standardize:
        if spec.fit_on == "pooled":
            stats = fit_standardize(np.vstack([source.features, target.features]))
        else:
            stats = fit_standardize(source.features)
        source, _ = standardize(source, stats)
        target, _ = standardize(target, stats)
    if spec.pca_dims is not None:
        source, target = pca_reduce(source, target, spec.pca_dims)
    return source, target


def class_means(classes: int, dim: int, separation: float = 4.0) -> np.ndarray:
    """Class centres spaced ``separation`` apart (adjacent centres) in the first two axes."""
    means = np.zeros((classes, dim))
    if dim == 1:
        means[:, 0] = separation * (np.arange(classes) - (classes - 1) / 2.0)
        return means
    radius = separation / (2.0 * math.sin(math.pi / classes))
    angles = 2.0 * math.pi * np.arange(classes) / classes
    means[:, 0] = radius * np.cos(angles)
    means[:, 1] = radius * np.sin(angles)
    return means


def _rotate(X: np.ndarray, angle: float) -> np.ndarray:
    if X.shape[1] < 2 or angle == 0.0:
        return X
    c, s = math.cos(angle), math.sin(angle)
    out = X.copy()
    out[:, 0] = c * X[:, 0] - s * X[:, 1]
    out[:, 1] = s * X[:, 0] + c * X[:, 1]
    return out


def _balanced_labels(n: int, classes: int) -> np.ndarray:
    return np.arange(n) % classes + 1


def make_shifted_gaussians(
    seed: int,
    n_s: int,
    n_t: int,
    classes: int,
    dim: int,
    shift: float,
    rotation: float,
) -> Tuple[LabeledDomain, LabeledDomain]:
    """Source/target pair of isotropic unit-variance Gaussian classes.

    Class centres sit ``4`` standard deviations apart. Target samples are
    drawn from the same class-conditional Gaussians, then rotated by
    ``rotation`` radians about the origin in the first two axes and
    translated by ``shift`` along the first axis. Labels are balanced
    round-robin; the target keeps its labels for scoring.
    """
    if classes < 2:
        raise DataError("classes must be >= 2")
    if n_s < classes or n_t < classes:
        raise DataError("n_s and n_t must each be >= classes")
    if dim < 1:
        raise DataError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    means = class_means(classes, dim)
    ys = _balanced_labels(n_s, classes)
    yt = _balanced_labels(n_t, classes)
    Xs = means[ys - 1] + rng.standard_normal((n_s, dim))
    Xt = means[yt - 1] + rng.standard_normal((n_t, dim))
    Xt = _rotate(Xt, rotation)
    Xt[:, 0] += shift
    return LabeledDomain(Xs, ys, "source"), LabeledDomain(Xt, yt, "target")
