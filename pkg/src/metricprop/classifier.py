"""Multinomial logistic regression trained with per-example confidence weights.

The objective is ``-(1/N) * sum_i alpha_i * log p_{y_i}(x_i)`` plus an L2
penalty on the weights.  True labels enter with ``alpha = 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax, softmax

from .core import ClassRangeError, LabeledSet, PseudoLabelSet, check_embeddings, read_embeddings, write_embeddings
from .metric import DivergenceError


@dataclass(frozen=True)
class SoftmaxClassifier:
    weights: np.ndarray  # (C, d)
    bias: np.ndarray  # (C,)
    history: tuple = field(default=(), compare=False)

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class ClassifierConfig:
    learning_rate: float = 0.5
    epochs: int = 100
    batch_size: int = 256
    seed: int = 0
    l2: float = 1e-4

    def __post_init__(self):
        if not self.learning_rate > 0 or self.epochs < 0 or self.batch_size < 1 or self.l2 < 0:
            raise ValueError("invalid classifier training configuration")


def _logits(clf, X):
    return X @ clf.weights.T + clf.bias


def weighted_ce_loss_grad(clf: SoftmaxClassifier, X, y, alpha):
    """Confidence-weighted cross entropy and its gradients.

    Returns ``(loss, (grad_weights, grad_bias))``.  ``N`` counts every row
    presented, including rows with zero weight.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    alpha = np.asarray(alpha, dtype=np.float64)
    C = clf.n_classes
    if np.any((y < 0) | (y >= C)):
        raise ClassRangeError(f"label outside 0..{C - 1}")
    if np.any((alpha < 0) | (alpha > 1)):
        raise ValueError("weights must lie in [0, 1]")
    N = len(y)
    if N == 0:
        return 0.0, (np.zeros_like(clf.weights), np.zeros_like(clf.bias))
    z = _logits(clf, X)
    logp = log_softmax(z, axis=1)
    loss = -float(np.sum(alpha * logp[np.arange(N), y])) / N
    G = np.exp(logp)
    G[np.arange(N), y] -= 1.0
    G *= (alpha / N)[:, None]
    return loss, (G.T @ X, G.sum(axis=0))


def predict(clf: SoftmaxClassifier, X):
    """Class ids (ties to the lower id) and probability rows."""
    X = check_embeddings(X)
    p = softmax(_logits(clf, X), axis=1)
    return np.argmax(p, axis=1), p


def training_set(labels: LabeledSet, pseudo: PseudoLabelSet | None = None):
    """Merged ``(indices, labels, alpha)`` with true labels at ``alpha = 1``."""
    idx, y, a = [labels.indices], [labels.classes], [np.ones(len(labels))]
    if pseudo is not None and len(pseudo):
        if np.intersect1d(labels.indices, pseudo.indices).size:
            raise ValueError("labeled and pseudo-labeled index sets overlap")
        idx.append(pseudo.indices)
        y.append(pseudo.labels)
        a.append(pseudo.confidence)
    return np.concatenate(idx), np.concatenate(y), np.concatenate(a)


def train_classifier(
    X,
    labels: LabeledSet,
    pseudo: PseudoLabelSet | None = None,
    cfg: ClassifierConfig = ClassifierConfig(),
) -> SoftmaxClassifier:
    """Minibatch gradient descent from zero weights.

    Zero-confidence examples are removed before batching; they carry no
    gradient, so dropping them only changes the per-batch normalizer.
    """
    X = check_embeddings(X)
    idx, y, alpha = training_set(labels, pseudo)
    keep = alpha > 0
    idx, y, alpha = idx[keep], y[keep], alpha[keep]
    C = labels.n_classes
    if len(y) and y.max() >= C:
        C = int(y.max()) + 1
    W = np.zeros((C, X.shape[1]))
    b = np.zeros(C)
    Xt = X[idx]
    rng = np.random.default_rng(cfg.seed)

    def objective(W, b):
        loss, _ = weighted_ce_loss_grad(SoftmaxClassifier(W, b), Xt, y, alpha)
        return loss + 0.5 * cfg.l2 * float(np.sum(W * W))

    history = [objective(W, b)]
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(len(y))
        for start in range(0, len(perm), cfg.batch_size):
            sel = perm[start:start + cfg.batch_size]
            _, (gW, gb) = weighted_ce_loss_grad(SoftmaxClassifier(W, b), Xt[sel], y[sel], alpha[sel])
            W = W - cfg.learning_rate * (gW + cfg.l2 * W)
            b = b - cfg.learning_rate * gb
        loss = objective(W, b)
        if not np.isfinite(loss):
            raise DivergenceError(epoch)
        history.append(loss)
    return SoftmaxClassifier(W, b, tuple(history))


def save_classifier(clf: SoftmaxClassifier, prefix) -> None:
    """``<prefix>.emb`` holds the weight matrix; ``<prefix>.bias.csv`` one
    bias per line."""
    write_embeddings(clf.weights, f"{prefix}.emb")
    with open(f"{prefix}.bias.csv", "w") as fh:
        for v in clf.bias:
            fh.write(f"{v:.17g}\n")


def load_classifier(prefix) -> SoftmaxClassifier:
    W = read_embeddings(f"{prefix}.emb").astype(np.float64)
    b = np.loadtxt(f"{prefix}.bias.csv", ndmin=1)
    return SoftmaxClassifier(W, b)
