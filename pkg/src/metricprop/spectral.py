"""Normalized graph Laplacian, its smallest eigenpairs, and the spectral
embedding built from them.

The embedding replaces raw graph weights with

    W' = sum_{j >= 2} e_j e_j^T / lambda_j

over the computed eigenpairs ``(lambda_j, e_j)`` of
``L = I - D^{-1/2} W D^{-1/2}``.  On a disconnected graph some of the
``lambda_j`` (j >= 2) are zero; those components are left out of the sum.
They are the directions separating connected components, and as a bridge
between two components weakens its ``1 / lambda`` weight grows without
bound, so in the limit component membership decides the vote before
anything else.  The default ``null_policy="gate"`` keeps that limit: a
point may only receive a class that is labeled somewhere in its own
component (see :func:`metricprop.propagation.spectral_propagate`).
``null_policy="drop"`` only removes the zero components.

For large graphs ``W'`` is never formed; callers use the factor ``U`` with
``W' = U U^T`` (see :meth:`SpectralModel.factor`).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .core import write_embeddings
from .similarity import SimilarityGraph

DENSE_MAX_N = 512
DENSE_EMBEDDING_MAX_N = 20_000
ZERO_TOL = 1e-8
RESIDUAL_TOL = 1e-8
NULL_POLICIES = ("gate", "drop")


class IsolatedVertexError(ValueError):
    def __init__(self, vertex):
        super().__init__(f"vertex {vertex} has zero degree")
        self.vertex = vertex


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (max residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class SpectralModel:
    """The ``eta`` smallest eigenpairs of a normalized Laplacian.

    Attributes
    ----------
    eigenvalues : ndarray, shape (eta,)
        Ascending, clipped to ``[0, 2]``.
    eigenvectors : ndarray, shape (n, eta)
        Orthonormal columns.
    zero_components : ndarray of int
        Column indices (always >= 1) whose eigenvalue is at most
        ``zero_tol * max(eigenvalues)``.  They never enter the embedding.
    null_policy : {"gate", "drop"}
        Whether voting is restricted to classes labeled in the voter's
        connected component.
    components : ndarray of int, optional
        Connected-component id of every node.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    zero_components: np.ndarray
    zero_tol: float = ZERO_TOL
    null_policy: str = "gate"
    components: np.ndarray | None = None

    def __post_init__(self):
        if self.null_policy not in NULL_POLICIES:
            raise ValueError(f"unknown null policy {self.null_policy!r}")
        if self.components is None:
            object.__setattr__(self, "components", np.zeros(self.n, dtype=np.int64))

    @property
    def eta(self) -> int:
        return len(self.eigenvalues)

    @property
    def n(self) -> int:
        return self.eigenvectors.shape[0]

    @property
    def dropped(self) -> np.ndarray:
        """Components excluded from the embedding."""
        return self.zero_components

    @property
    def n_components(self) -> int:
        return int(self.components.max()) + 1

    def kept(self) -> np.ndarray:
        """Columns that enter the embedding."""
        cols = np.arange(1, self.eta)
        return cols[~np.isin(cols, self.dropped)]

    def weights(self) -> np.ndarray:
        """Per-column weight ``1 / lambda_j`` for :meth:`kept` columns."""
        kept = self.kept()
        if kept.size == 0:
            raise ValueError(
                "every spectral component is numerically zero; "
                "the graph has at least eta connected components"
            )
        return 1.0 / self.eigenvalues[kept]

    def factor(self) -> np.ndarray:
        """``U`` with columns ``e_j * sqrt(weight_j)``, so ``W' = U U^T``."""
        w = self.weights()
        return self.eigenvectors[:, self.kept()] * np.sqrt(w)


def _as_adjacency(G):
    W = G.adjacency if isinstance(G, SimilarityGraph) else G
    W = sp.csr_matrix(W, dtype=np.float64, copy=True)
    W.eliminate_zeros()
    return W


def normalized_laplacian(G) -> sp.csr_matrix:
    """``I - D^{-1/2} W D^{-1/2}`` for a graph or a symmetric weight matrix."""
    W = _as_adjacency(G)
    d = np.asarray(W.sum(axis=1)).ravel()
    if np.any(d <= 0):
        raise IsolatedVertexError(int(np.flatnonzero(d <= 0)[0]))
    s = sp.diags(1.0 / np.sqrt(d))
    L = sp.identity(W.shape[0], format="csr") - s @ W @ s
    L = L.tocsr()
    L.sort_indices()
    return L


def null_space_basis(G) -> np.ndarray:
    """Orthonormal kernel of the normalized Laplacian.

    The first column is the global ``sqrt(degree)`` direction; the others
    span the rest of the kernel, one dimension per extra connected
    component.
    """
    W = _as_adjacency(G)
    d = np.asarray(W.sum(axis=1)).ravel()
    if np.any(d <= 0):
        raise IsolatedVertexError(int(np.flatnonzero(d <= 0)[0]))
    n_comp, comp = connected_components(W, directed=False)
    N = np.zeros((W.shape[0], n_comp))
    N[np.arange(W.shape[0]), comp] = np.sqrt(d)
    N /= np.linalg.norm(N, axis=0)
    g = np.sqrt(d) / np.linalg.norm(np.sqrt(d))
    Q, _ = np.linalg.qr(np.column_stack([g, N]))
    Q = Q[:, :n_comp]
    return Q * np.sign(Q[np.argmax(np.abs(Q), axis=0), np.arange(n_comp)])


def _residuals(L, vals, vecs):
    return np.linalg.norm(L @ vecs - vecs * vals, axis=0)


def _dense_eigh(L, eta):
    vals, vecs = np.linalg.eigh(L.toarray() if sp.issparse(L) else np.asarray(L))
    return vals[:eta], vecs[:, :eta]


def _krylov_eigh(L, k, null, degree, seed, arpack_tol, maxiter):
    """Largest eigenpairs of ``P (I - L/2)^degree P`` with ``P`` projecting
    out ``null``.  The polynomial is decreasing on ``[0, 2]``, so these are
    the smallest eigenpairs of ``L`` on the complement of ``null``."""
    n = L.shape[0]

    def project(x):
        if null.shape[1]:
            x = x - null @ (null.T @ x)
        return x

    def matvec(x):
        x = project(np.asarray(x, dtype=np.float64).ravel())
        for _ in range(degree):
            x = x - 0.5 * (L @ x)
        return project(x)

    op = LinearOperator((n, n), matvec=matvec, dtype=np.float64)
    v0 = project(np.random.default_rng(seed).standard_normal(n))
    try:
        _, vecs = eigsh(op, k=k, which="LA", v0=v0, tol=arpack_tol, maxiter=maxiter)
    except ArpackNoConvergence as exc:
        vecs = exc.eigenvectors
        if vecs is None or vecs.size == 0:
            raise ConvergenceError("eigensolver did not converge", np.inf) from None
        vals = np.einsum("ij,ij->j", vecs, L @ vecs)
        raise ConvergenceError(
            f"eigensolver converged {vecs.shape[1]} of {k} pairs",
            float(_residuals(L, vals, vecs).max()),
        ) from None
    vals = np.einsum("ij,ij->j", vecs, L @ vecs)
    return vals, vecs


def eigendecompose(
    L,
    eta: int,
    *,
    method: str = "auto",
    null_space: np.ndarray | None = None,
    seed: int = 0,
    degree: int = 16,
    zero_tol: float = ZERO_TOL,
    residual_tol: float = RESIDUAL_TOL,
    maxiter: int | None = None,
    null_policy: str = "gate",
) -> SpectralModel:
    """The ``eta`` algebraically smallest eigenpairs of a normalized Laplacian.

    Parameters
    ----------
    L : sparse or dense symmetric matrix
    eta : int
        Number of eigenpairs, ``2 <= eta <= n``.
    method : {"auto", "dense", "lanczos"}
        ``auto`` uses the dense solver when ``n <= 512``.  The Krylov path
        (ARPACK) also falls back to dense when ``eta >= n - 1``.
    null_space : ndarray, optional
        Known orthonormal kernel of ``L`` (see :func:`null_space_basis`).
        It replaces the computed zero eigenvectors, which makes their
        multiplicity exact and their basis canonical on disconnected graphs.
    degree : int
        Power of the polynomial filter ``(I - L/2)`` handed to ARPACK.

    Raises
    ------
    ConvergenceError
        If a returned pair has residual ``|L e - lambda e|`` above
        ``residual_tol``.
    """
    n = L.shape[0]
    if not 2 <= eta <= n:
        raise ValueError(f"eta must satisfy 2 <= eta <= n={n}, got {eta}")
    if method not in ("auto", "dense", "lanczos"):
        raise ValueError(f"unknown eigensolver method {method!r}")
    L = sp.csr_matrix(L, dtype=np.float64)
    null = np.zeros((n, 0)) if null_space is None else np.asarray(null_space, dtype=np.float64)

    use_dense = method == "dense" or (method == "auto" and n <= DENSE_MAX_N) or eta >= n - 1
    if use_dense:
        vals, vecs = _dense_eigh(L, eta)
        m = min(null.shape[1], eta)
        if m:
            vecs[:, :m] = null[:, :m]
            vals[:m] = 0.0
    elif null.shape[1] >= eta:
        vecs = null[:, :eta]
        vals = np.zeros(eta)
    else:
        k = eta - null.shape[1]
        vals, vecs = _krylov_eigh(L, k, null, degree, seed, 1e-11, maxiter)
        if _residuals(L, vals, vecs).max() > residual_tol and degree > 1:
            vals, vecs = _krylov_eigh(L, k, null, 1, seed, 1e-12, maxiter)
        if null.shape[1]:
            vals = np.concatenate([np.zeros(null.shape[1]), vals])
            vecs = np.hstack([null, vecs])
        order = np.argsort(vals, kind="stable")
        vals, vecs = vals[order], vecs[:, order]

    res = _residuals(L, vals, vecs)
    if res.max() > residual_tol:
        raise ConvergenceError("eigenpair residual above tolerance", float(res.max()))
    vals = np.clip(vals, 0.0, 2.0)
    cutoff = zero_tol * vals.max()
    zero = np.flatnonzero(vals <= cutoff)
    zero = zero[zero >= 1]
    pattern = L.copy()
    pattern.eliminate_zeros()
    _, comp = connected_components(pattern, directed=False)
    return SpectralModel(vals, np.ascontiguousarray(vecs), zero, zero_tol, null_policy, comp.astype(np.int64))


def fit_spectral(G, eta: int, **kwargs) -> SpectralModel:
    """Laplacian plus eigendecomposition for a similarity graph, with its
    connected-component kernel deflated.  ``eta`` is capped at the number
    of points."""
    L = normalized_laplacian(G)
    return eigendecompose(L, min(eta, L.shape[0]), null_space=null_space_basis(G), **kwargs)


def spectral_embedding(model: SpectralModel) -> np.ndarray:
    """Dense ``W'``.  Refuses graphs above 20,000 points; use
    :meth:`SpectralModel.factor` there."""
    if model.n > DENSE_EMBEDDING_MAX_N:
        raise ValueError(f"dense W' refused for n={model.n}; use the factored form")
    U = model.factor()
    return U @ U.T


def save_spectral_model(model: SpectralModel, prefix) -> None:
    """Eigenvectors as ``<prefix>.emb``; ``<prefix>.eigenvalues.csv`` holds
    ``index,eigenvalue,is_zero`` lines."""
    write_embeddings(model.eigenvectors, f"{prefix}.emb")
    zero = set(model.zero_components.tolist())
    with open(f"{prefix}.eigenvalues.csv", "w") as fh:
        for j, lam in enumerate(model.eigenvalues):
            fh.write(f"{j},{lam:.17g},{int(j in zero)}\n")
