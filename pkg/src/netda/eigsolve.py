"""Smallest eigenpairs of a dense symmetric-definite pencil ``lhs a = lambda rhs a``."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import linalg

logger = logging.getLogger(__name__)

JITTER_RETRIES = 3
SYMMETRY_TOL = 1e-8


class EigenSolveError(RuntimeError):
    """The right-hand matrix could not be made positive definite."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class EigenSolution:
    vectors: np.ndarray
    values: np.ndarray
    residual: float
    jitter: float


def symmetrize(M, name="matrix") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M))) if M.size else 1.0)
    if M.size and np.max(np.abs(M - M.T)) > SYMMETRY_TOL * scale:
        raise ValueError(f"{name} is not symmetric")
    return 0.5 * (M + M.T)


def _fix_signs(V: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.where(V[idx, np.arange(V.shape[1])] < 0, -1.0, 1.0)
    return V * signs


class FactoredMetric:
    """Cholesky factor ``C C^T`` of ``rhs + jitter * I``.

    Building one of these is the expensive part of a solve; it can be reused
    for any number of left-hand sides that share the same ``rhs``.
    """

    def __init__(self, rhs, jitter: Optional[float] = None):
        rhs = symmetrize(rhs, "rhs")
        n = rhs.shape[0]
        trace = float(np.trace(rhs))
        base = max(1e-8 * trace / n, 0.0) if jitter is None else float(jitter)
        if base < 0:
            raise ValueError("jitter must be nonnegative")
        tried = []
        for attempt in range(JITTER_RETRIES + 1):
            eps = base * 10.0 ** attempt
            if attempt > 0 and eps == 0.0:
                eps = 1e-8 * max(abs(trace) / n, 1.0) * 10.0 ** (attempt - 1)
            tried.append(eps)
            try:
                chol = linalg.cholesky(rhs + eps * np.eye(n), lower=True)
            except linalg.LinAlgError:
                logger.debug("cholesky failed with jitter %.3e", eps)
                continue
            self.rhs = rhs
            self.jitter = eps
            self.chol = chol
            return
        raise EigenSolveError(
            "rhs is not positive definite after jitter escalation",
            {"jitters_tried": tried, "rhs_trace": trace,
             "rhs_min_eig": float(linalg.eigvalsh(rhs, subset_by_index=[0, 0])[0])},
        )

    @property
    def n(self) -> int:
        return self.chol.shape[0]

    def whiten(self, V) -> np.ndarray:
        """``C^-1 V``."""
        return linalg.solve_triangular(self.chol, V, lower=True)

    def reduce(self, M) -> np.ndarray:
        """``C^-1 M C^-T`` for symmetric ``M``."""
        half = self.whiten(M)
        out = self.whiten(half.T)
        return 0.5 * (out + out.T)

    def rhs_matvec(self, A) -> np.ndarray:
        return self.rhs @ A + self.jitter * A

    def smallest(
        self,
        reduced,
        k: int,
        lhs_matvec: Callable[[np.ndarray], np.ndarray],
        lhs_norm: float,
    ) -> EigenSolution:
        """Eigenpairs from an already reduced left-hand side.

        Eigenvalues are Rayleigh quotients on the unreduced pencil, which
        makes their error quadratic in the eigenvector error.
        """
        n = self.n
        if not 1 <= k <= n:
            raise ValueError(f"k must lie in 1..{n}, got {k}")
        _, Y = linalg.eigh(reduced, subset_by_index=[0, k - 1])
        A = _fix_signs(linalg.solve_triangular(self.chol, Y, lower=True, trans="T"))
        lhs_a = lhs_matvec(A)
        rhs_a = self.rhs_matvec(A)
        values = np.einsum("ij,ij->j", A, lhs_a) / np.einsum("ij,ij->j", A, rhs_a)
        order = np.argsort(values, kind="stable")
        values, A, lhs_a, rhs_a = values[order], A[:, order], lhs_a[:, order], rhs_a[:, order]
        R = lhs_a - rhs_a * values
        denom = max(lhs_norm, np.finfo(float).tiny) * np.linalg.norm(A, axis=0)
        residual = float(np.max(np.linalg.norm(R, axis=0) / denom))
        return EigenSolution(vectors=A, values=values, residual=residual, jitter=self.jitter)


def generalized_eig_smallest(lhs, rhs, k: int, jitter: Optional[float] = None) -> EigenSolution:
    """Return the ``k`` smallest eigenpairs of ``lhs A = rhs' A diag(values)``.

    ``rhs' = rhs + jitter * I`` is Cholesky-factored as ``C C^T`` and the
    pencil is reduced to the standard symmetric problem
    ``C^-1 lhs C^-T y = lambda y`` with ``a = C^-T y``. Returned columns are
    ``rhs'``-orthonormal, and each column's largest-magnitude entry is
    made nonnegative.

    If the Cholesky factorization fails, the jitter is multiplied by 10 up
    to three times before giving up with :class:`EigenSolveError`.
    ``jitter=None`` selects ``1e-8 * trace(rhs) / n``.
    """
    lhs = symmetrize(lhs, "lhs")
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != lhs.shape:
        raise ValueError(f"shape mismatch: lhs {lhs.shape}, rhs {rhs.shape}")
    n = lhs.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in 1..{n}, got {k}")
    metric = FactoredMetric(rhs, jitter)
    return metric.smallest(metric.reduce(lhs), k, lambda A: lhs @ A, float(np.linalg.norm(lhs, "fro")))
