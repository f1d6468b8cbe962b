"""Nonlinear Embedding Transform: assembly, pseudo-label iterations, 1-NN scoring."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from .data import LabeledDomain
from .eigsolve import EigenSolution, EigenSolveError, FactoredMetric
from .graph import SimilarityGraph, build_adjacency, embedding_cost, normalized_laplacian
from .kernel import GramMatrix, KernelSpec, kernel_matrix
from .mmd import mmd_cost, mmd_vectors

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HyperParams:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    k: int = 20
    iterations: int = 10

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("alpha, beta and gamma must be nonnegative")
        if max(self.alpha, self.beta, self.gamma) <= 0:
            raise ValueError("at least one of alpha, beta, gamma must be positive")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError("k must be a positive integer")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ValueError("iterations must be a positive integer")

    def key(self) -> Tuple[int, float, float, float]:
        return (int(self.k), float(self.alpha), float(self.beta), float(self.gamma))

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma,
                "k": self.k, "iterations": self.iterations}


@dataclass(frozen=True)
class IterationRecord:
    pseudo_labels: np.ndarray
    changed: int
    accuracy: Optional[float]
    mmd_cost: float
    embedding_cost: float
    frobenius: float
    objective: float
    eigenvalue_sum: float


@dataclass(frozen=True)
class NetModel:
    coefficients: np.ndarray
    eigenvalues: np.ndarray
    kernel_spec: KernelSpec
    gram: GramMatrix
    params: HyperParams
    history: List[IterationRecord] = field(default_factory=list)
    jitter: float = 0.0
    initial_labels: Optional[np.ndarray] = None
    initial_accuracy: Optional[float] = None

    @property
    def n_source(self) -> int:
        return self.gram.source_count

    @property
    def projected(self) -> np.ndarray:
        return project(self.gram.values, self.coefficients)

    @property
    def target_labels(self) -> np.ndarray:
        return self.history[-1].pseudo_labels

    @property
    def accuracy(self) -> Optional[float]:
        return self.history[-1].accuracy


class NetFitError(RuntimeError):
    def __init__(self, message, iteration, diagnostics=None):
        super().__init__(message)
        self.iteration = iteration
        self.diagnostics = diagnostics or {}


def assemble_system(K, mmd_sum, L, D, params: HyperParams):
    """Left and right matrices of the NET eigenproblem.

    ``lhs = alpha K M K^T + beta K L K^T + gamma I`` and ``rhs = K D K^T``.
    ``D`` may be the degree vector or the diagonal matrix.
    """
    K = K.values if isinstance(K, GramMatrix) else np.asarray(K, dtype=float)
    n = K.shape[0]
    M = np.asarray(mmd_sum, dtype=float)
    L = np.asarray(L, dtype=float)
    D = np.asarray(D, dtype=float)
    if D.ndim == 2:
        D = np.diag(D)
    if K.shape != (n, n) or M.shape != (n, n) or L.shape != (n, n) or D.shape != (n,):
        raise ValueError("assemble_system: all inputs must be n x n (D may be length n)")
    lhs = params.gamma * np.eye(n)
    if params.alpha:
        lhs += params.alpha * (K @ M @ K.T)
    if params.beta:
        lhs += params.beta * (K @ L @ K.T)
    rhs = (K * D) @ K.T
    return 0.5 * (lhs + lhs.T), 0.5 * (rhs + rhs.T)


def project(K_block, A) -> np.ndarray:
    """``Z = A^T K_block``: one column of projected coordinates per kernel column."""
    K_block = np.asarray(K_block, dtype=float)
    A = np.asarray(A, dtype=float)
    if K_block.ndim == 1:
        K_block = K_block[:, None]
    if K_block.shape[0] != A.shape[0]:
        raise ValueError(f"dimension mismatch: K_block has {K_block.shape[0]} rows, A has {A.shape[0]}")
    return A.T @ K_block


def nn_classify(train_Z, train_labels, test_Z) -> np.ndarray:
    """1-nearest-neighbour labels; columns are samples, ties go to the lowest training index."""
    train_Z = np.atleast_2d(np.asarray(train_Z, dtype=float))
    test_Z = np.atleast_2d(np.asarray(test_Z, dtype=float))
    train_labels = np.asarray(train_labels)
    if train_Z.shape[1] == 0:
        raise ValueError("empty training set")
    if train_labels.shape[0] != train_Z.shape[1]:
        raise ValueError("one label per training column required")
    if train_Z.shape[0] != test_Z.shape[0]:
        raise ValueError("train and test dimensions differ")
    dist = cdist(test_Z.T, train_Z.T, "sqeuclidean")
    return train_labels[np.argmin(dist, axis=1)]


def accuracy(predicted, truth) -> Optional[float]:
    if truth is None:
        return None
    return float(np.mean(np.asarray(predicted) == np.asarray(truth)))


def na_baseline(source: LabeledDomain, target: LabeledDomain) -> Tuple[np.ndarray, Optional[float]]:
    """No adaptation: 1-NN from source to target in the given feature space."""
    if not source.has_labels:
        raise ValueError("source domain must be labeled")
    pred = nn_classify(source.features.T, source.labels, target.features.T)
    return pred, accuracy(pred, target.labels)


@dataclass
class NetSystem:
    """Everything in the NET eigenproblem that does not depend on pseudo-labels
    or on the weights: Gram matrix, similarity graph, ``K L K^T`` and the
    factored constraint ``K D K^T + jitter I`` with its reductions.

    One system can serve every iteration of a fit and every configuration of
    a grid search over the same stacked data.
    """

    gram: GramMatrix
    source_labels: np.ndarray
    graph: SimilarityGraph
    klk: np.ndarray
    metric: FactoredMetric
    reduced_identity: np.ndarray
    reduced_klk: np.ndarray

    @property
    def n(self) -> int:
        return self.gram.n

    @property
    def n_source(self) -> int:
        return self.gram.source_count

    @property
    def num_classes(self) -> int:
        return int(self.source_labels.max())

    def lhs(self, K_mmd: np.ndarray, params: HyperParams) -> np.ndarray:
        # K_mmd holds K v for each rank-one MMD generator v, so K M K^T = K_mmd K_mmd^T.
        n = self.n
        lhs = params.gamma * np.eye(n)
        if params.alpha:
            lhs += params.alpha * (K_mmd @ K_mmd.T)
        if params.beta:
            lhs += params.beta * self.klk
        return 0.5 * (lhs + lhs.T)

    def solve(self, target_labels, params: HyperParams) -> Tuple[EigenSolution, np.ndarray]:
        """Solve the eigenproblem for the given pseudo-labels; also returns the MMD sum."""
        V = mmd_vectors(self.source_labels, target_labels, self.num_classes)
        K = self.gram.values
        K_mmd = K @ V
        lhs = self.lhs(K_mmd, params)
        reduced = params.gamma * self.reduced_identity
        if params.alpha:
            W = self.metric.whiten(K_mmd)
            reduced = reduced + params.alpha * (W @ W.T)
        if params.beta:
            reduced = reduced + params.beta * self.reduced_klk
        reduced = 0.5 * (reduced + reduced.T)
        sol = self.metric.smallest(reduced, params.k, lambda A: lhs @ A,
                                   float(np.linalg.norm(lhs, "fro")))
        return sol, V @ V.T


def prepare_system(
    source: LabeledDomain,
    target: LabeledDomain,
    spec: KernelSpec,
    jitter: Optional[float] = None,
) -> NetSystem:
    if not source.has_labels:
        raise ValueError("source domain must be labeled")
    if source.d != target.d:
        raise ValueError(f"source has d={source.d}, target has d={target.d}")
    gram = kernel_matrix(np.vstack([source.features, target.features]), spec, source_count=source.n)
    K = gram.values
    graph = normalized_laplacian(build_adjacency(source.labels, target.n))
    klk = K @ graph.laplacian @ K.T
    klk = 0.5 * (klk + klk.T)
    rhs = (K * graph.degrees) @ K.T
    try:
        metric = FactoredMetric(rhs, jitter)
    except EigenSolveError as exc:
        raise NetFitError(f"constraint matrix factorization failed: {exc}", 0, exc.diagnostics) from exc
    return NetSystem(
        gram=gram,
        source_labels=source.labels,
        graph=graph,
        klk=klk,
        metric=metric,
        reduced_identity=metric.reduce(np.eye(K.shape[0])),
        reduced_klk=metric.reduce(klk),
    )


def net_fit(
    source: LabeledDomain,
    target: LabeledDomain,
    spec: KernelSpec,
    params: HyperParams,
    jitter: Optional[float] = None,
    system: Optional[NetSystem] = None,
) -> NetModel:
    """Fit NET transductively and label the target.

    The kernel, graph and constraint matrix are built once (or taken from
    ``system``). Pseudo-labels start from input-space 1-NN and are
    refreshed after every eigen-solve by 1-NN from projected source to
    projected target. Target labels, if present, only score the history.
    """
    if system is None:
        system = prepare_system(source, target, spec, jitter)
    n_s = source.n
    if system.n_source != n_s or system.n != n_s + target.n:
        raise ValueError("system was prepared for differently sized domains")
    if params.k > system.n:
        raise ValueError(f"k={params.k} exceeds n={system.n}")
    ys = source.labels
    K = system.gram.values
    L = system.graph.laplacian

    labels, init_acc = na_baseline(source, target)
    initial = labels
    history: List[IterationRecord] = []
    sol = None
    for it in range(1, params.iterations + 1):
        if history and history[-1].changed == 0:
            # same pseudo-labels in, same deterministic solve out
            history.append(history[-1])
            continue
        try:
            sol, mmd_sum = system.solve(labels, params)
        except EigenSolveError as exc:
            raise NetFitError(f"eigen-solve failed at iteration {it}: {exc}", it, exc.diagnostics) from exc
        Z = project(K, sol.vectors)
        new_labels = nn_classify(Z[:, :n_s], ys, Z[:, n_s:])
        mc = mmd_cost(Z, mmd_sum)
        ec = embedding_cost(Z, L)
        fro = float(np.sum(sol.vectors ** 2))
        record = IterationRecord(
            pseudo_labels=new_labels,
            changed=int(np.sum(new_labels != labels)),
            accuracy=accuracy(new_labels, target.labels),
            mmd_cost=mc,
            embedding_cost=ec,
            frobenius=fro,
            objective=params.alpha * mc + params.beta * ec + params.gamma * fro,
            eigenvalue_sum=float(np.sum(sol.values)),
        )
        history.append(record)
        logger.debug("iteration %d: changed=%d acc=%s obj=%.6g", it, record.changed,
                     record.accuracy, record.objective)
        labels = new_labels

    return NetModel(
        coefficients=sol.vectors,
        eigenvalues=sol.values,
        kernel_spec=system.gram.spec,
        gram=system.gram,
        params=params,
        history=history,
        jitter=sol.jitter,
        initial_labels=initial,
        initial_accuracy=init_acc,
    )
