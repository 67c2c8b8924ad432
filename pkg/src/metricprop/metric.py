"""Linear metric pretraining.

A :class:`LinearEmbedder` maps features through ``A`` and scores pairs by
cosine similarity divided by a temperature.  Two objectives are provided:

* instance discrimination, where every example is its own class:
  ``P(i | x_i) = exp(s_ii) / sum_j exp(s_ij)``;
* neighborhood components analysis, where an example is supported by the
  other members of its class:
  ``P(y_i | x_i) = sum_{k != i, y_k = y_i} exp(s_ik) / sum_{j != i} exp(s_ij)``.

Both losses are ``-mean(log P)`` over a batch, with normalizers taken over
that batch.  Passing the whole set as the batch gives the full objective.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp, softmax

from .core import LabeledSet, check_embeddings, read_embeddings, write_embeddings

DEFAULT_TEMPERATURE = 0.07
_EVAL_MAX = 2048


class DivergenceError(RuntimeError):
    def __init__(self, epoch):
        super().__init__(f"training loss became non-finite at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class LinearEmbedder:
    A: np.ndarray
    temperature: float = DEFAULT_TEMPERATURE
    normalize: bool = True
    history: tuple = field(default=(), compare=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        if not np.all(np.isfinite(A)):
            raise ValueError("embedder weights must be finite")
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")
        object.__setattr__(self, "A", A)

    @property
    def d_in(self) -> int:
        return self.A.shape[1]

    @property
    def d_out(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 20
    batch_size: int = 128
    seed: int = 0
    objective: str = "instance"
    d_out: int | None = None
    temperature: float = DEFAULT_TEMPERATURE
    normalize: bool = True

    def __post_init__(self):
        if self.objective not in ("instance", "nca"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if not self.learning_rate > 0 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError("learning_rate and batch_size must be positive, epochs >= 0")


def embed(M: LinearEmbedder, X) -> np.ndarray:
    X = check_embeddings(X)
    if X.shape[1] != M.d_in:
        raise ValueError(f"dimension mismatch: embedder takes {M.d_in}, got {X.shape[1]}")
    Y = X @ M.A.T
    if M.normalize:
        Y = Y / _row_norms(Y)[:, None]
    return Y


def _row_norms(Y):
    r = np.linalg.norm(Y, axis=1)
    if np.any(r == 0):
        raise ValueError(f"embedded row {int(np.flatnonzero(r == 0)[0])} is zero")
    return r


def _scores(M, Xb):
    Y = Xb @ M.A.T
    r = _row_norms(Y)
    Z = Y / r[:, None]
    return Z, r, (Z @ Z.T) / M.temperature


def _grad_A(M, Xb, Z, r, G):
    """Chain rule from ``dL/dS`` back to ``A`` through the cosine scores."""
    dZ = (G + G.T) @ Z / M.temperature
    dY = (dZ - Z * np.einsum("ij,ij->i", dZ, Z)[:, None]) / r[:, None]
    return dY.T @ Xb


def instance_loss_grad(M: LinearEmbedder, X, batch=None):
    """Instance-discrimination loss and its gradient with respect to ``A``."""
    X = check_embeddings(X)
    Xb = X if batch is None else X[np.asarray(batch)]
    b = Xb.shape[0]
    if b == 0:
        raise ValueError("empty batch")
    Z, r, S = _scores(M, Xb)
    loss = float(np.mean(logsumexp(S, axis=1) - np.diag(S)))
    G = (softmax(S, axis=1) - np.eye(b)) / b
    return loss, _grad_A(M, Xb, Z, r, G)


def nca_loss_grad(M: LinearEmbedder, X, labels: LabeledSet, batch=None):
    """Neighborhood-components loss and gradient, self excluded.

    ``batch`` holds positions into ``labels`` (defaults to all of them).
    """
    X = check_embeddings(X)
    pos = np.arange(len(labels)) if batch is None else np.asarray(batch)
    if pos.size == 0:
        raise ValueError("empty batch")
    Xb = X[labels.indices[pos]]
    y = labels.classes[pos]
    same = y[:, None] == y[None, :]
    np.fill_diagonal(same, False)
    if np.any(~same.any(axis=1)):
        bad = int(y[~same.any(axis=1)][0])
        raise ValueError(f"class {bad} has a single member in the batch")
    b = len(pos)
    Z, r, S = _scores(M, Xb)
    np.fill_diagonal(S, -np.inf)
    S_same = np.where(same, S, -np.inf)
    loss = float(np.mean(logsumexp(S, axis=1) - logsumexp(S_same, axis=1)))
    G = (softmax(S, axis=1) - softmax(S_same, axis=1)) / b
    return loss, _grad_A(M, Xb, Z, r, G)


def _drop_singletons(pos, classes):
    _, inv, counts = np.unique(classes[pos], return_inverse=True, return_counts=True)
    return pos[counts[inv] > 1]


def _initial_embedder(d_in, cfg, rng):
    if cfg.d_out is None or cfg.d_out == d_in:
        A = np.eye(d_in)
    else:
        A = rng.standard_normal((cfg.d_out, d_in)) / np.sqrt(d_in)
    return LinearEmbedder(A, cfg.temperature, cfg.normalize)


def train(X, labels: LabeledSet | None = None, cfg: TrainConfig = TrainConfig()) -> LinearEmbedder:
    """Minibatch gradient descent on the chosen objective.

    The returned embedder's ``history`` holds the evaluation loss before
    training and after every epoch.  For NCA, batch members whose class has
    no other member in the same batch are skipped for that step.
    """
    X = check_embeddings(X)
    rng = np.random.default_rng(cfg.seed)
    M = _initial_embedder(X.shape[1], cfg, rng)
    if cfg.objective == "nca":
        if labels is None:
            raise ValueError("nca objective requires labels")
        pool = np.arange(len(labels))
        step = lambda M, batch: nca_loss_grad(M, X, labels, batch)
    else:
        pool = np.arange(X.shape[0])
        step = lambda M, batch: instance_loss_grad(M, X, batch)

    eval_batch = np.sort(rng.permutation(pool)[:_EVAL_MAX])
    if cfg.objective == "nca":
        eval_batch = _drop_singletons(eval_batch, labels.classes)
    history = [step(M, eval_batch)[0]]
    A = M.A.copy()
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(pool)
        for start in range(0, len(perm), cfg.batch_size):
            batch = perm[start:start + cfg.batch_size]
            if cfg.objective == "nca":
                batch = _drop_singletons(batch, labels.classes)
            if len(batch) < 2:
                continue
            _, grad = step(replace(M, A=A), batch)
            A = A - cfg.learning_rate * grad
            if not np.all(np.isfinite(A)):
                raise DivergenceError(epoch)
        loss = step(replace(M, A=A), eval_batch)[0]
        if not np.isfinite(loss):
            raise DivergenceError(epoch)
        history.append(loss)
    return LinearEmbedder(A, cfg.temperature, cfg.normalize, tuple(history))


def save_embedder(M: LinearEmbedder, prefix) -> None:
    """``<prefix>.emb`` holds ``A``; ``<prefix>.meta.csv`` one line
    ``d_in,d_out,normalize,temperature``."""
    write_embeddings(M.A, f"{prefix}.emb")
    with open(f"{prefix}.meta.csv", "w") as fh:
        fh.write(f"{M.d_in},{M.d_out},{int(M.normalize)},{M.temperature:.17g}\n")


def load_embedder(prefix) -> LinearEmbedder:
    A = read_embeddings(f"{prefix}.emb").astype(np.float64)
    with open(f"{prefix}.meta.csv") as fh:
        d_in, d_out, norm, temp = fh.read().strip().split(",")
    if A.shape != (int(d_out), int(d_in)):
        raise ValueError("embedder metadata does not match the weight matrix")
    return LinearEmbedder(A, float(temp), bool(int(norm)))
