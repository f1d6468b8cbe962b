"""Kernel Mean Matching source weights and the top-weight validation split."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .data import LabeledDomain
from .kernel import KernelSpec, cross_kernel, default_jitter, kernel_matrix

MAX_ITER = 10_000
MAX_BACKTRACK = 60


class KmmError(ValueError):
    """Raised when the KMM constraint set is empty."""


@dataclass(frozen=True)
class KmmResult:
    weights: np.ndarray
    objective: float
    iterations_used: int
    feasible: bool
    B: float
    epsilon: float
    converged: bool = True
    objective_trace: List[float] = field(default_factory=list, repr=False)


@dataclass(frozen=True)
class ValidationSplit:
    validation_indices: np.ndarray
    train_indices: np.ndarray
    fraction: float


def default_epsilon(n_s: int) -> float:
    r = math.sqrt(n_s)
    return (r - 1.0) / r


def sum_bounds(n_s: int, epsilon: float):
    return n_s * (1.0 - epsilon), n_s * (1.0 + epsilon)


def project_box_slab(y, B: float, lo: float, hi: float) -> np.ndarray:
    """Euclidean projection onto ``{w : 0 <= w <= B, lo <= sum(w) <= hi}``.

    The projection is ``clip(y - mu, 0, B)`` for a scalar shift ``mu``.
    ``sum(clip(y - mu))`` is piecewise linear and nonincreasing in ``mu``
    with breakpoints at ``y_i`` and ``y_i - B``, so the shift that hits the
    violated bound is found exactly by locating its segment.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    w = np.clip(y, 0.0, B)
    s = float(w.sum())
    if lo <= s <= hi:
        return w
    goal = hi if s > hi else lo
    if goal >= n * B:
        return np.full(n, float(B))
    if goal <= 0.0:
        return np.zeros(n)

    bps = np.unique(np.concatenate([y, y - B]))
    vals = np.clip(y[None, :] - bps[:, None], 0.0, B).sum(axis=1)
    # vals is nonincreasing along the ascending breakpoints
    j = int(np.searchsorted(-vals, -goal, side="left"))
    if j < len(bps) and vals[j] == goal:
        return np.clip(y - bps[j], 0.0, B)
    mu_a, mu_b = bps[j - 1], bps[j]
    s_a, s_b = vals[j - 1], vals[j]
    mu = mu_a + (s_a - goal) * (mu_b - mu_a) / (s_a - s_b)
    return np.clip(y - mu, 0.0, B)


def solve_kmm_qp(
    K_s,
    kappa,
    B: float,
    epsilon: float,
    tol: Optional[float] = None,
    max_iter: int = MAX_ITER,
):
    """Minimize ``0.5 w^T K_s w - kappa^T w`` over the KMM feasible set.

    Projected gradient descent with a Barzilai-Borwein trial step and
    backtracking that only accepts steps which do not increase the
    objective. Stops when ``||w - P(w - grad)|| <= tol`` (default
    ``1e-6 * n_s``).
    """
    K_s = np.asarray(K_s, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    n = kappa.shape[0]
    if B <= 0:
        raise KmmError("B must be positive")
    if epsilon < 0:
        raise KmmError("epsilon must be nonnegative")
    lo, hi = sum_bounds(n, epsilon)
    if B * n < lo:
        raise KmmError(f"infeasible constraints: B * n_s = {B * n:g} < n_s (1 - eps) = {lo:g}")
    tol = 1e-6 * n if tol is None else tol

    def objective(w):
        return 0.5 * float(w @ (K_s @ w)) - float(kappa @ w)

    w = project_box_slab(np.ones(n), B, lo, hi)
    f = objective(w)
    trace = [f]
    step = 1.0 / max(float(np.max(np.abs(np.diag(K_s)))), 1e-12)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = K_s @ w - kappa
        if np.linalg.norm(w - project_box_slab(w - g, B, lo, hi)) <= tol:
            converged = True
            it -= 1
            break
        t = step
        for _ in range(MAX_BACKTRACK):
            w_new = project_box_slab(w - t * g, B, lo, hi)
            d = w_new - w
            f_new = objective(w_new)
            if f_new <= f + float(g @ d) + float(d @ d) / (2.0 * t) and f_new <= f:
                break
            t *= 0.5
        else:
            # no decrease representable at this precision
            converged = True
            break
        s_k = w_new - w
        y_k = K_s @ s_k
        sy = float(s_k @ y_k)
        step = float(s_k @ s_k) / sy if sy > 0 else step * 2.0
        step = min(max(step, 1e-10), 1e10)
        w, f = w_new, f_new
        trace.append(f)
    return w, f, it, converged, trace


def kmm_weights(
    source_features,
    target_features,
    spec: KernelSpec,
    B: float = 1000.0,
    epsilon: Optional[float] = None,
) -> KmmResult:
    """Source instance weights matching the target kernel mean.

    ``kappa_i = (n_s / n_t) sum_j k(x_i^s, x_j^t)``; ``K_s`` gets the usual
    ``1e-8 * trace / n`` diagonal loading. ``epsilon=None`` selects
    ``(sqrt(n_s) - 1) / sqrt(n_s)``. An rbf spec without bandwidth is
    resolved on the pooled data.
    """
    Xs = np.asarray(source_features, dtype=float)
    Xt = np.asarray(target_features, dtype=float)
    n_s, n_t = Xs.shape[0], Xt.shape[0]
    eps = default_epsilon(n_s) if epsilon is None else float(epsilon)
    spec = spec.resolve(np.vstack([Xs, Xt]))
    K_s = kernel_matrix(Xs, spec).values
    K_s = K_s + default_jitter(K_s) * np.eye(n_s)
    kappa = (n_s / n_t) * cross_kernel(Xs, Xt, spec).sum(axis=1)
    w, f, iters, converged, trace = solve_kmm_qp(K_s, kappa, B, eps)
    lo, hi = sum_bounds(n_s, eps)
    feasible = bool(np.all(w >= 0) and np.all(w <= B) and lo - 1e-9 * n_s <= w.sum() <= hi + 1e-9 * n_s)
    return KmmResult(
        weights=w,
        objective=f,
        iterations_used=iters,
        feasible=feasible,
        B=float(B),
        epsilon=eps,
        converged=converged,
        objective_trace=trace,
    )


def validation_size(n_s: int, fraction: float) -> int:
    # round half away from zero
    return int(math.floor(fraction * n_s + 0.5))


def select_validation(source: LabeledDomain, weights, fraction: float = 0.3) -> ValidationSplit:
    """Validation set = the ``round(fraction * n_s)`` largest weights, ties to the lower index."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (source.n,):
        raise ValueError(f"expected {source.n} weights, got shape {w.shape}")
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    m = validation_size(source.n, fraction)
    order = np.argsort(-w, kind="stable")
    val = np.sort(order[:m])
    train = np.sort(order[m:])
    return ValidationSplit(validation_indices=val, train_indices=train, fraction=fraction)
