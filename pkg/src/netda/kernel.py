"""Kernel functions and Gram matrices."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist, pdist

FAMILIES = ("linear", "rbf", "polynomial")
MEDIAN_SUBSAMPLE = 2000


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and parameters.

    ``bandwidth=None`` for the rbf family means "use the median heuristic on
    the data the kernel is evaluated on"; call :meth:`resolve` to pin it.
    """

    family: str = "rbf"
    bandwidth: Optional[float] = None
    degree: int = 2
    offset: float = 1.0

    def __post_init__(self):
        family = {"poly": "polynomial"}.get(self.family, self.family)
        if family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        object.__setattr__(self, "family", family)
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if int(self.degree) != self.degree or self.degree < 1:
            raise ValueError("degree must be a positive integer")

    def resolve(self, X) -> "KernelSpec":
        if self.family == "rbf" and self.bandwidth is None:
            return replace(self, bandwidth=median_bandwidth(X))
        return self

    def to_dict(self) -> dict:
        return {"family": self.family, "bandwidth": self.bandwidth,
                "degree": self.degree, "offset": self.offset}


@dataclass(frozen=True)
class GramMatrix:
    values: np.ndarray
    spec: KernelSpec
    source_count: int

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def jitter(self) -> float:
        return default_jitter(self.values)


def default_jitter(M: np.ndarray) -> float:
    """Diagonal loading 1e-8 * trace/n applied before factorizing a PSD matrix."""
    n = M.shape[0]
    return 1e-8 * float(np.trace(M)) / n


def _check_features(X, name="X") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def _evaluate(A: np.ndarray, B: np.ndarray, spec: KernelSpec) -> np.ndarray:
    if spec.family == "linear":
        return A @ B.T
    if spec.family == "polynomial":
        return (A @ B.T + spec.offset) ** spec.degree
    if spec.bandwidth is None:
        raise ValueError("rbf kernel needs a bandwidth; call spec.resolve(X) first")
    sq = cdist(A, B, "sqeuclidean")
    return np.exp(-sq / (2.0 * spec.bandwidth ** 2))


def kernel_matrix(X, spec: KernelSpec, source_count: Optional[int] = None) -> GramMatrix:
    """Gram matrix over the stacked rows of ``X`` (source rows first).

    Exact symmetry is enforced by averaging with the transpose.
    """
    X = _check_features(X)
    spec = spec.resolve(X)
    K = _evaluate(X, X, spec)
    K = 0.5 * (K + K.T)
    return GramMatrix(K, spec, X.shape[0] if source_count is None else int(source_count))


def cross_kernel(A, B, spec: KernelSpec) -> np.ndarray:
    """Kernel evaluations ``k(a_i, b_j)`` between the rows of two matrices."""
    A = _check_features(A, "A")
    B = _check_features(B, "B")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return _evaluate(A, B, spec)


def median_bandwidth(X) -> float:
    """Median pairwise Euclidean distance, or 1.0 when that median is zero.

    Inputs with more than 2000 rows are subsampled at evenly spaced indices.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] > MEDIAN_SUBSAMPLE:
        X = X[np.linspace(0, X.shape[0] - 1, MEDIAN_SUBSAMPLE).astype(np.int64)]
    if X.shape[0] < 2:
        return 1.0
    med = float(np.median(pdist(X)))
    return med if med > 0 else 1.0
