"""Class logits for unlabeled points by similarity-weighted voting.

Both propagation modes share :func:`vote`: the logit of class ``c`` for an
unlabeled point is the mean weight linking it to the labeled examples of
``c``.  Nearest-neighbor mode votes with raw kernel weights; spectral mode
votes with the spectral embedding ``W'`` of a k-NN graph over labeled and
unlabeled points together.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import EmptyClassError, IndexRangeError, KernelSpec, LabeledSet, check_embeddings
from .similarity import build_knn_graph, similarity_to_targets
from .spectral import SpectralModel, fit_spectral

# logit for a class that cannot reach a point; finite so logits stay
# storable, and low enough that its softmax probability underflows to 0
UNREACHABLE = float(np.finfo(np.float32).min)


@dataclass(frozen=True)
class PropagationResult:
    """``logits[r]`` belongs to point ``indices[r]``."""

    logits: np.ndarray
    indices: np.ndarray
    method: str
    provenance: dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return self.logits.shape[1]


def vote(block, labels: LabeledSet) -> np.ndarray:
    """Per-class mean of ``block`` columns.

    ``block`` is ``(n_u, n_t)`` with columns in ``labels`` order.
    """
    block = np.asarray(block, dtype=np.float64)
    if block.ndim != 2 or block.shape[1] != len(labels):
        raise ValueError(f"block has {block.shape[-1]} columns for {len(labels)} labeled examples")
    counts = labels.class_counts()
    if np.any(counts == 0):
        raise EmptyClassError(f"class {int(np.flatnonzero(counts == 0)[0])} has no labeled example")
    indicator = labels.label_vectors() == 1
    return (block @ indicator) / counts


def _resolve_unlabeled(labels, n, unlabeled):
    if unlabeled is None:
        return labels.unlabeled(n)
    unlabeled = np.asarray(unlabeled, dtype=np.int64).reshape(-1)
    if unlabeled.size and (unlabeled.min() < 0 or unlabeled.max() >= n):
        raise IndexRangeError("unlabeled index outside the embedding set")
    if len(np.unique(unlabeled)) != len(unlabeled):
        raise ValueError("duplicate unlabeled index")
    if np.intersect1d(unlabeled, labels.indices).size:
        raise ValueError("labeled and unlabeled index sets overlap")
    return unlabeled


def nn_propagate(S, labels: LabeledSet, unlabeled=None) -> PropagationResult:
    """One-step voting from a precomputed ``(n_u, n_t)`` weight block."""
    S = np.asarray(S, dtype=np.float64)
    if unlabeled is None:
        unlabeled = np.arange(S.shape[0])
    return PropagationResult(vote(S, labels), np.asarray(unlabeled, dtype=np.int64), "nn")


def spectral_propagate(embedding, labels: LabeledSet, unlabeled) -> PropagationResult:
    """Voting with the spectral embedding.

    ``embedding`` is a :class:`SpectralModel` (evaluated in factored form,
    never materializing ``W'``) or any dense ``(n, n)`` similarity matrix,
    which is voted with as is.

    Under the model's ``"gate"`` null policy a class with no labeled example
    in a point's connected component gets the logit :data:`UNREACHABLE`.
    Points whose component holds no label at all end up with a flat row.
    """
    unlabeled = np.asarray(unlabeled, dtype=np.int64).reshape(-1)
    if isinstance(embedding, SpectralModel):
        n = embedding.n
    else:
        embedding = np.asarray(embedding, dtype=np.float64)
        n = embedding.shape[0]
    for name, idx in (("labeled", labels.indices), ("unlabeled", unlabeled)):
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise IndexRangeError(f"{name} index outside the {n}-point model")
    if not isinstance(embedding, SpectralModel):
        block = embedding[np.ix_(unlabeled, labels.indices)]
        return PropagationResult(vote(block, labels), unlabeled, "spectral")
    U = embedding.factor()
    z = vote(U[unlabeled] @ U[labels.indices].T, labels)
    prov = {"eta": embedding.eta, "zero_components": len(embedding.zero_components), "unreachable": 0}
    if embedding.null_policy == "gate" and embedding.n_components > 1:
        comp = embedding.components
        reach = np.zeros((embedding.n_components, labels.n_classes), dtype=bool)
        reach[comp[labels.indices], labels.classes] = True
        reach = reach[comp[unlabeled]]
        z[~reach] = UNREACHABLE
        prov["unreachable"] = int((~reach.any(axis=1)).sum())
    return PropagationResult(z, unlabeled, "spectral", prov)


def _local_labels(labels, subset):
    pos = np.searchsorted(subset, labels.indices)
    return LabeledSet(pos, labels.classes, labels.n_classes)


def _spectral_on_subset(X, labels, subset_unlabeled, k, eta, spec, seed, null_policy):
    subset = np.union1d(labels.indices, subset_unlabeled)
    G = build_knn_graph(X[subset], k, spec)
    model = fit_spectral(G, eta, seed=seed, null_policy=null_policy)
    local_unl = np.searchsorted(subset, subset_unlabeled)
    return spectral_propagate(model, _local_labels(labels, subset), local_unl)


def propagate(
    X,
    labels: LabeledSet,
    unlabeled=None,
    *,
    method: str = "spectral",
    k: int = 10,
    eta: int = 200,
    spec: KernelSpec = KernelSpec(),
    seed: int = 0,
    null_policy: str = "gate",
) -> PropagationResult:
    """End-to-end propagation from embeddings.

    ``unlabeled`` defaults to every point without a label.  Spectral mode
    builds one k-NN graph over labeled and unlabeled points together.
    """
    X = check_embeddings(X)
    unlabeled = _resolve_unlabeled(labels, X.shape[0], unlabeled)
    prov = {"kernel": spec.kind, "exponentiate": spec.exponentiate}
    if method == "nn":
        S = similarity_to_targets(X, unlabeled, labels.indices, spec)
        res = nn_propagate(S, labels, unlabeled)
        return PropagationResult(res.logits, unlabeled, "nn", prov)
    if method != "spectral":
        raise ValueError(f"unknown propagation method {method!r}")
    res = _spectral_on_subset(X, labels, unlabeled, k, eta, spec, seed, null_policy)
    prov.update(res.provenance, k=k, chunks=1)
    return PropagationResult(res.logits, unlabeled, "spectral", prov)


def chunk_unlabeled(unlabeled, chunks: int, seed: int = 0) -> list[np.ndarray]:
    """Seeded shuffle, then contiguous split into ``chunks`` shards.

    Each shard is returned sorted.
    """
    if chunks < 1:
        raise ValueError("chunks must be >= 1")
    unlabeled = np.asarray(unlabeled, dtype=np.int64)
    perm = np.random.default_rng(seed).permutation(len(unlabeled))
    return [np.sort(unlabeled[p]) for p in np.array_split(perm, chunks)]


def chunked_propagate(
    X,
    labels: LabeledSet,
    unlabeled=None,
    *,
    chunks: int = 1,
    k: int = 10,
    eta: int = 200,
    spec: KernelSpec = KernelSpec(),
    seed: int = 0,
    shards=None,
    null_policy: str = "gate",
) -> PropagationResult:
    """Spectral propagation over independent shards of the unlabeled set.

    Every shard gets its own graph over (all labeled points + shard).  With
    ``chunks=1`` the output is identical to ``propagate(method="spectral")``.
    ``shards`` overrides the seeded split with an explicit partition.
    """
    X = check_embeddings(X)
    unlabeled = _resolve_unlabeled(labels, X.shape[0], unlabeled)
    if shards is None:
        shards = chunk_unlabeled(unlabeled, chunks, seed)
    else:
        shards = [np.sort(np.asarray(s, dtype=np.int64)) for s in shards]
        joined = np.sort(np.concatenate(shards)) if shards else np.zeros(0, np.int64)
        if not np.array_equal(joined, np.sort(unlabeled)):
            raise ValueError("shards must partition the unlabeled set")
    for s in shards:
        if len(s) < k + 1:
            raise ValueError(f"shard of {len(s)} points is smaller than k+1={k + 1}")

    row_of = {int(u): r for r, u in enumerate(unlabeled)}
    logits = np.empty((len(unlabeled), labels.n_classes))
    zero = unreachable = 0
    for s in shards:
        part = _spectral_on_subset(X, labels, s, k, eta, spec, seed, null_policy)
        logits[[row_of[int(u)] for u in s]] = part.logits
        zero += part.provenance["zero_components"]
        unreachable += part.provenance["unreachable"]
    prov = {
        "kernel": spec.kind,
        "exponentiate": spec.exponentiate,
        "k": k,
        "eta": eta,
        "chunks": len(shards),
        "zero_components": zero,
        "unreachable": unreachable,
    }
    return PropagationResult(logits, unlabeled, "spectral", prov)
