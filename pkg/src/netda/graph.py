"""Label-similarity graph and its normalized Laplacian."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SimilarityGraph:
    adjacency: np.ndarray
    degrees: np.ndarray
    laplacian: np.ndarray


def build_adjacency(source_labels, n_t: int) -> np.ndarray:
    """Binary adjacency over [source; target] samples.

    Two source samples are linked when their labels agree. Target samples
    carry no label information, so they only get their self-edge.
    """
    ys = np.asarray(source_labels)
    n_s = ys.shape[0]
    n = n_s + int(n_t)
    W = np.zeros((n, n))
    W[:n_s, :n_s] = ys[:, None] == ys[None, :]
    np.fill_diagonal(W, 1.0)
    return W


def normalized_laplacian(W) -> SimilarityGraph:
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError("adjacency must be square")
    d = W.sum(axis=1)
    if np.any(d <= 0):
        raise ValueError(f"zero-degree vertex at index {int(np.flatnonzero(d <= 0)[0])}")
    s = 1.0 / np.sqrt(d)
    L = np.eye(W.shape[0]) - s[:, None] * W * s[None, :]
    L = 0.5 * (L + L.T)
    return SimilarityGraph(adjacency=W, degrees=d, laplacian=L)


def embedding_cost(Z, L) -> float:
    """``tr(Z L Z^T)`` for projected data ``Z`` (k x n)."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    L = np.asarray(L, dtype=float)
    if L.shape != (Z.shape[1], Z.shape[1]):
        raise ValueError(f"dimension mismatch: Z is {Z.shape}, L is {L.shape}")
    return float(np.einsum("ij,ij->", Z @ L, Z))
