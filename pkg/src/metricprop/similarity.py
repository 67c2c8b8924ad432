"""Pairwise similarity kernels and exact k-nearest-neighbor graphs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import KernelSpec, check_embeddings

_BLOCK_BYTES = 128 * 2**20


@dataclass(frozen=True)
class SimilarityGraph:
    """Symmetric sparse weight matrix with zero diagonal."""

    adjacency: sp.csr_matrix
    k: int

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def degrees(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel()

    def edges(self):
        """Undirected edges ``(i, j, w)`` with ``i < j``, sorted by ``(i, j)``."""
        upper = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return upper.row[order], upper.col[order], upper.data[order]


def similarity(a, b, spec: KernelSpec = KernelSpec()) -> float:
    """Raw similarity ``f(a, b)``; no exponentiation is applied."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    if spec.kind == "cosine":
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na == 0 or nb == 0:
            raise ValueError("cosine similarity of a zero vector")
        return float(np.clip(a @ b / (na * nb), -1.0, 1.0))
    return -float(np.linalg.norm(a - b))


def kernel_weights(f, spec: KernelSpec) -> np.ndarray:
    """Map raw similarities to strictly positive weights.

    ``exp(f)`` when exponentiating; otherwise cosine is shifted to
    ``1 + f`` and floored at the smallest positive double.
    """
    f = np.asarray(f, dtype=np.float64)
    if spec.exponentiate:
        return np.exp(f)
    return np.maximum(1.0 + f, np.finfo(np.float64).tiny)


def _unit_rows(X):
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise ValueError(f"cosine kernel requires nonzero rows; row {int(np.argmin(norms))} is zero")
    return X / norms[:, None]


def pairwise_similarity(A, B, spec: KernelSpec = KernelSpec()) -> np.ndarray:
    """Dense raw similarity block ``f(A[i], B[j])``."""
    A = check_embeddings(A)
    B = check_embeddings(B)
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if spec.kind == "cosine":
        return np.clip(_unit_rows(A) @ _unit_rows(B).T, -1.0, 1.0)
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
    return -np.sqrt(np.maximum(sq, 0.0))


def similarity_to_targets(X, unlabeled, targets, spec: KernelSpec = KernelSpec()) -> np.ndarray:
    """Weight block ``(n_u, n_t)`` between unlabeled rows and labeled targets."""
    unlabeled = np.asarray(unlabeled, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    if np.intersect1d(unlabeled, targets).size:
        raise ValueError("unlabeled and target index sets overlap")
    X = check_embeddings(X)
    return kernel_weights(pairwise_similarity(X[unlabeled], X[targets], spec), spec)


def _top_k(S, k):
    """Column indices of the k largest entries per row, ties to lower index.

    ``S`` already has the self-similarity masked with ``-inf``.
    """
    m, n = S.shape
    idx = np.argpartition(S, n - k, axis=1)[:, n - k:]
    chosen = np.take_along_axis(S, idx, axis=1)
    kth = chosen.min(axis=1)
    # argpartition picks arbitrarily among values equal to the kth; fix those rows
    n_tied_total = (S == kth[:, None]).sum(axis=1)
    n_tied_chosen = (chosen == kth[:, None]).sum(axis=1)
    for r in np.flatnonzero(n_tied_total > n_tied_chosen):
        row = S[r]
        above = np.flatnonzero(row > kth[r])
        tied = np.flatnonzero(row == kth[r])[: k - len(above)]
        idx[r] = np.concatenate([above, tied])
    return idx


def _edge_similarity(X, rows, cols, spec):
    if spec.kind == "cosine":
        return np.clip(np.einsum("ij,ij->i", X[rows], X[cols]), -1.0, 1.0)
    diff = X[rows] - X[cols]
    return -np.sqrt(np.einsum("ij,ij->i", diff, diff))


def build_knn_graph(X, k: int = 10, spec: KernelSpec = KernelSpec()) -> SimilarityGraph:
    """Exact k-NN similarity graph by blocked exhaustive scan.

    Every point links to its ``k`` most similar other points (ties go to the
    lower index).  The directed neighbor lists are symmetrized by union and
    weighted with :func:`kernel_weights`.
    """
    X = check_embeddings(X)
    n = X.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < n={n}, got {k}")
    if spec.kind == "cosine":
        X = _unit_rows(X)
        sqnorm = None
    else:
        sqnorm = (X * X).sum(1)

    block = max(1, min(n, _BLOCK_BYTES // (8 * n)))
    cols = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, block):
        stop = min(n, start + block)
        S = X[start:stop] @ X.T
        if sqnorm is not None:
            # ranking by -|a-b|^2 == ranking by 2ab - |b|^2
            S = 2.0 * S - sqnorm[None, :]
        S[np.arange(stop - start), np.arange(start, stop)] = -np.inf
        cols[start:stop] = _top_k(S, k)

    rows = np.repeat(np.arange(n), k)
    cols = cols.ravel()
    w = kernel_weights(_edge_similarity(X, rows, cols, spec), spec)
    directed = sp.csr_matrix((w, (rows, cols)), shape=(n, n))
    W = directed.maximum(directed.T).tocsr()
    W.sort_indices()
    return SimilarityGraph(W, k)


def write_graph(G: SimilarityGraph, path) -> None:
    """Dump undirected edges as ``i j w`` lines with ``i < j``."""
    i, j, w = G.edges()
    with open(path, "w") as fh:
        for a, b, c in zip(i, j, w):
            fh.write(f"{a} {b} {c:.17g}\n")


def read_graph(path, n: int, k: int = 0) -> SimilarityGraph:
    """Inverse of :func:`write_graph`; ``k`` is recorded as given."""
    data = np.loadtxt(path, ndmin=2) if _nonempty(path) else np.zeros((0, 3))
    i = data[:, 0].astype(np.int64)
    j = data[:, 1].astype(np.int64)
    upper = sp.csr_matrix((data[:, 2], (i, j)), shape=(n, n))
    W = (upper + upper.T).tocsr()
    W.sort_indices()
    return SimilarityGraph(W, k)


def _nonempty(path):
    with open(path) as fh:
        return bool(fh.read(1))
