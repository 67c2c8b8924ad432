"""Pseudo-label quality metrics and synthetic desk-scale datasets."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .core import LabeledSet, PseudoLabelSet


class MapResult(NamedTuple):
    value: float
    per_class: dict
    skipped: list


def rank_correctness(pseudo: PseudoLabelSet, truth):
    """Order records by confidence (descending, ties by point index).

    Returns ``(indices, confidence, correct)`` in ranked order.
    """
    truth = np.asarray(truth)
    order = np.lexsort((pseudo.indices, -pseudo.confidence))
    idx = pseudo.indices[order]
    return idx, pseudo.confidence[order], pseudo.labels[order] == truth[idx]


def accumulated_accuracy(correct):
    """Coverage fraction and running accuracy over a ranked correctness list."""
    correct = np.asarray(correct, dtype=bool)
    n = len(correct)
    if n == 0:
        raise ValueError("accumulated accuracy of an empty ranking")
    t = np.arange(1, n + 1)
    return t / n, np.cumsum(correct) / t


def average_precision(relevant) -> float:
    """Mean of precision@r over the ranks r that hold a relevant item."""
    relevant = np.asarray(relevant, dtype=bool)
    hits = np.flatnonzero(relevant)
    if hits.size == 0:
        return float("nan")
    return float(np.mean(np.arange(1, hits.size + 1) / (hits + 1)))


def pseudo_label_map(pseudo: PseudoLabelSet, truth) -> MapResult:
    """Per-class average precision of confidence-ranked pseudo-labels.

    For class ``c`` the ranking holds every point pseudo-labeled ``c``,
    sorted by confidence; a point is relevant when its true class is ``c``.
    Classes without a relevant point are skipped and listed.
    """
    truth = np.asarray(truth)
    if len(pseudo) and pseudo.indices.max() >= len(truth):
        raise ValueError("truth does not cover every pseudo-labeled index")
    order = np.lexsort((pseudo.indices, -pseudo.confidence))
    idx = pseudo.indices[order]
    ranked_labels = pseudo.labels[order]
    n_classes = int(max(ranked_labels.max(initial=-1), truth.max(initial=-1))) + 1
    per_class, skipped = {}, []
    for c in range(n_classes):
        rel = truth[idx[ranked_labels == c]] == c
        if not rel.any():
            skipped.append(c)
            continue
        per_class[c] = average_precision(rel)
    value = float(np.mean(list(per_class.values()))) if per_class else float("nan")
    return MapResult(value, per_class, skipped)


def pseudo_label_accuracy(pseudo: PseudoLabelSet, truth) -> float:
    truth = np.asarray(truth)
    return float(np.mean(pseudo.labels == truth[pseudo.indices])) if len(pseudo) else float("nan")


def _balanced_counts(n, C):
    return np.full(C, n // C) + (np.arange(C) < n % C)


def gen_synthetic(kind: str, n: int, noise: float, n_classes: int = 2, seed: int = 0, dim: int = 2):
    """Deterministic ``(X, truth)`` for ``"two-moons"`` or ``"gaussian-blobs"``.

    Classes are balanced to within one point and rows are shuffled.  Blob
    centers are drawn uniformly from ``[-10, 10]^dim``; ``noise`` is the
    standard deviation of the isotropic Gaussian added to every point.
    """
    if n < 2 * n_classes or n_classes < 1 or noise < 0 or dim < 1:
        raise ValueError("invalid synthetic dataset parameters")
    rng = np.random.default_rng(seed)
    counts = _balanced_counts(n, n_classes)
    y = np.repeat(np.arange(n_classes), counts)
    if kind == "two-moons":
        if n_classes != 2 or dim != 2:
            raise ValueError("two-moons has exactly 2 classes in 2 dimensions")
        t0 = np.linspace(0, np.pi, counts[0])
        t1 = np.linspace(0, np.pi, counts[1])
        X = np.vstack([
            np.column_stack([np.cos(t0), np.sin(t0)]),
            np.column_stack([1 - np.cos(t1), 0.5 - np.sin(t1)]),
        ])
    elif kind == "gaussian-blobs":
        centers = rng.uniform(-10.0, 10.0, size=(n_classes, dim))
        X = centers[y].copy()
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    if noise > 0:
        X = X + noise * rng.standard_normal(X.shape)
    perm = rng.permutation(n)
    return X[perm], y[perm]


def random_features(X, dim: int = 200, bandwidth: float = 0.3, seed: int = 0) -> np.ndarray:
    """Random Fourier features for a Gaussian kernel of width ``bandwidth``.

    ``phi(x) = sqrt(2/dim) * cos(x W / bandwidth + b)`` with ``W`` standard
    normal and ``b`` uniform on ``[0, 2 pi)``.  A cheap nonlinear stand-in for
    a learned feature extractor on low-dimensional synthetic data.
    """
    X = np.asarray(X, dtype=np.float64)
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((X.shape[1], dim))
    b = rng.uniform(0.0, 2 * np.pi, dim)
    return np.sqrt(2.0 / dim) * np.cos(X @ W / bandwidth + b)


def split_labeled(truth, per_class: int, seed: int = 0, n_classes: int | None = None) -> LabeledSet:
    """Stratified sample of ``per_class`` labeled points from every class."""
    truth = np.asarray(truth, dtype=np.int64)
    C = int(truth.max()) + 1 if n_classes is None else n_classes
    rng = np.random.default_rng(seed)
    picked = []
    for c in range(C):
        members = np.flatnonzero(truth == c)
        if per_class > len(members):
            raise ValueError(f"class {c} has only {len(members)} points, asked for {per_class}")
        picked.append(rng.choice(members, size=per_class, replace=False))
    idx = np.sort(np.concatenate(picked)) if picked else np.zeros(0, np.int64)
    return LabeledSet(idx, truth[idx], C)


def write_curve(coverage, accuracy, path) -> None:
    with open(path, "w") as fh:
        fh.write("coverage,accuracy\n")
        for c, a in zip(coverage, accuracy):
            fh.write(f"{c:.17g},{a:.17g}\n")
