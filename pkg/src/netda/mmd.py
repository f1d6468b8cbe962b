"""Marginal and class-conditional MMD coefficient matrices.

Every matrix here is a rank-one outer product ``v v^T`` of an indicator-style
vector over the stacked [source; target] samples, which is why they are all
symmetric, PSD, and have zero row sums.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class MmdSet:
    m0: np.ndarray
    sum: np.ndarray
    class_counts: Tuple[Tuple[int, int], ...]
    # Only kept when built with debug=True; the sum is all the solver needs.
    per_class: Optional[List[np.ndarray]] = None

    @property
    def num_classes(self) -> int:
        return len(self.class_counts)


def marginal_vector(n_s: int, n_t: int) -> np.ndarray:
    if n_s < 1 or n_t < 1:
        raise ValueError("n_s and n_t must both be >= 1")
    return np.concatenate([np.full(n_s, 1.0 / n_s), np.full(n_t, -1.0 / n_t)])


def class_vector(source_labels, target_labels, c: int) -> np.ndarray:
    """Generator of the class-``c`` matrix; all zeros if ``c`` is missing on either side."""
    ys = np.asarray(source_labels)
    yt = np.asarray(target_labels)
    in_s = ys == c
    in_t = yt == c
    ns_c = int(in_s.sum())
    nt_c = int(in_t.sum())
    v = np.zeros(ys.shape[0] + yt.shape[0])
    if ns_c == 0 or nt_c == 0:
        return v
    v[: ys.shape[0]][in_s] = 1.0 / ns_c
    v[ys.shape[0]:][in_t] = -1.0 / nt_c
    return v


def _block_matrix(in_s: np.ndarray, in_t: np.ndarray) -> np.ndarray:
    # Entries are written as 1/(a*b) rather than (1/a)*(1/b) so that they are
    # the correctly rounded values; the outer product can be 1 ulp off.
    a, b = int(in_s.sum()), int(in_t.sum())
    mask = np.concatenate([in_s, in_t])
    M = np.zeros((mask.shape[0], mask.shape[0]))
    if a == 0 or b == 0:
        return M
    sign = np.concatenate([in_s.astype(float), -in_t.astype(float)])
    same = np.outer(sign, sign)
    scale = np.concatenate([np.where(in_s, float(a), 0.0), np.where(in_t, float(b), 0.0)])
    denom = np.outer(scale, scale)
    np.divide(same, denom, out=M, where=np.outer(mask, mask))
    return M


def build_m0(n_s: int, n_t: int) -> np.ndarray:
    if n_s < 1 or n_t < 1:
        raise ValueError("n_s and n_t must both be >= 1")
    return _block_matrix(np.ones(n_s, bool), np.ones(n_t, bool))


def build_mc(source_labels, target_pseudo_labels, c: int) -> np.ndarray:
    """Class-``c`` matrix; the zero matrix if ``c`` is missing on either side."""
    return _block_matrix(np.asarray(source_labels) == c, np.asarray(target_pseudo_labels) == c)


def mmd_vectors(source_labels, target_pseudo_labels, num_classes: int) -> np.ndarray:
    """Stack the C+1 generators as columns: marginal first, then classes 1..C."""
    ys = np.asarray(source_labels)
    yt = np.asarray(target_pseudo_labels)
    cols = [marginal_vector(ys.shape[0], yt.shape[0])]
    cols += [class_vector(ys, yt, c) for c in range(1, num_classes + 1)]
    return np.column_stack(cols)


def build_mmd_set(source_labels, target_pseudo_labels, num_classes: int, debug: bool = False) -> MmdSet:
    """Assemble M0, the per-class matrices and their sum.

    Classes with no source or no target (pseudo-)members contribute a zero
    matrix. The sum is accumulated in class order so the result does not
    depend on how work is scheduled.
    """
    ys = np.asarray(source_labels)
    yt = np.asarray(target_pseudo_labels)
    m0 = build_m0(ys.shape[0], yt.shape[0])
    total = m0.copy()
    per_class = [] if debug else None
    counts = []
    for c in range(1, num_classes + 1):
        counts.append((int(np.sum(ys == c)), int(np.sum(yt == c))))
        mc = build_mc(ys, yt, c)
        total += mc
        if debug:
            per_class.append(mc)
    total = 0.5 * (total + total.T)
    return MmdSet(m0=m0, sum=total, class_counts=tuple(counts), per_class=per_class)


def mmd_cost(Z, M) -> float:
    """``tr(Z M Z^T)`` for projected data ``Z`` (k x n)."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    M = np.asarray(M, dtype=float)
    if M.shape != (Z.shape[1], Z.shape[1]):
        raise ValueError(f"dimension mismatch: Z is {Z.shape}, M is {M.shape}")
    return float(np.einsum("ij,ij->", Z @ M, Z))


def empirical_mmd(source_features, target_features, spec) -> float:
    """Biased squared MMD between two samples under kernel ``spec``."""
    from .kernel import kernel_matrix

    Xs = np.asarray(source_features, dtype=float)
    Xt = np.asarray(target_features, dtype=float)
    K = kernel_matrix(np.vstack([Xs, Xt]), spec).values
    v = marginal_vector(Xs.shape[0], Xt.shape[0])
    return float(v @ K @ v)
