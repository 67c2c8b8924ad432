"""Shared domain types and on-disk formats.

Embeddings are plain ``(n, d)`` float arrays; row ``i`` is point ``i``
everywhere in the package.  Labels, pseudo-labels and kernels get small
immutable containers.

File formats
------------
EMB1
    ``b"EMB1"``, then little-endian ``u32`` n and d, then ``n * d``
    little-endian ``f32`` values in row-major order.  No padding.
Labels CSV
    Header-free ``index,class_id`` lines.
Pseudo-label CSV
    Header-free ``index,pseudo_label,confidence`` lines.  Confidences are
    written with 17 significant digits so they round-trip exactly.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

EMB_MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sII")


class FormatError(ValueError):
    """Malformed input file."""


class BadMagicError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    pass


class NonFiniteError(FormatError):
    pass


class LabelError(ValueError):
    """Invalid label assignment."""


class DuplicateIndexError(LabelError):
    pass


class ClassRangeError(LabelError):
    pass


class IndexRangeError(LabelError):
    pass


class EmptyClassError(LabelError):
    """A class has no labeled example to vote with."""


def check_embeddings(X) -> np.ndarray:
    """Validate an embedding matrix and return it as a float64 array."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"embeddings must be a non-empty 2-D array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        bad = int(np.argwhere(~np.isfinite(X))[0, 0])
        raise NonFiniteError(f"non-finite entry in row {bad}")
    return X


@dataclass(frozen=True)
class KernelSpec:
    """Pairwise similarity ``f`` and whether graph weights are ``exp(f)``.

    ``kind`` is ``"cosine"`` or ``"negative-euclidean"``.  Negative
    euclidean similarities are never positive, so they are only accepted
    together with ``exponentiate=True``.
    """

    kind: str = "cosine"
    exponentiate: bool = True

    def __post_init__(self):
        if self.kind not in ("cosine", "negative-euclidean"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "negative-euclidean" and not self.exponentiate:
            raise ValueError("negative-euclidean kernel requires exponentiate=True")


@dataclass(frozen=True)
class LabeledSet:
    """Labeled points: ``indices[j]`` carries class ``classes[j]``."""

    indices: np.ndarray
    classes: np.ndarray
    n_classes: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        cls = np.asarray(self.classes, dtype=np.int64).reshape(-1)
        if idx.shape != cls.shape:
            raise ValueError("indices and classes differ in length")
        if self.n_classes < 1:
            raise ValueError("n_classes must be >= 1")
        if np.any(idx < 0):
            raise IndexRangeError("negative point index")
        if np.any((cls < 0) | (cls >= self.n_classes)):
            bad = int(cls[(cls < 0) | (cls >= self.n_classes)][0])
            raise ClassRangeError(f"class id {bad} outside 0..{self.n_classes - 1}")
        uniq, counts = np.unique(idx, return_counts=True)
        if np.any(counts > 1):
            raise DuplicateIndexError(f"duplicate labeled index {int(uniq[counts > 1][0])}")
        idx.flags.writeable = False
        cls.flags.writeable = False
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "classes", cls)

    def __len__(self):
        return len(self.indices)

    def class_counts(self) -> np.ndarray:
        """Number of labeled examples per class."""
        return np.bincount(self.classes, minlength=self.n_classes)

    def label_vectors(self) -> np.ndarray:
        """Dense ``(n_t, C)`` view with +1 at the true class and -1 elsewhere."""
        Y = -np.ones((len(self), self.n_classes))
        Y[np.arange(len(self)), self.classes] = 1.0
        return Y

    def unlabeled(self, n: int) -> np.ndarray:
        """Indices in ``0..n-1`` that carry no label."""
        if len(self) and self.indices.max() >= n:
            raise IndexRangeError(f"labeled index {int(self.indices.max())} >= n={n}")
        mask = np.ones(n, dtype=bool)
        mask[self.indices] = False
        return np.flatnonzero(mask)


@dataclass(frozen=True)
class PseudoLabelSet:
    """Propagated labels with margin confidences.

    ``n_discarded`` counts records dropped by the confidence threshold.
    """

    indices: np.ndarray
    labels: np.ndarray
    confidence: np.ndarray
    n_discarded: int = 0

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        lab = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        conf = np.asarray(self.confidence, dtype=np.float64).reshape(-1)
        if not (idx.shape == lab.shape == conf.shape):
            raise ValueError("pseudo-label arrays differ in length")
        if np.any((conf < 0) | (conf > 1)) or not np.all(np.isfinite(conf)):
            raise ValueError("confidence must lie in [0, 1]")
        if len(np.unique(idx)) != len(idx):
            raise DuplicateIndexError("duplicate pseudo-labeled index")
        for a in (idx, lab, conf):
            a.flags.writeable = False
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "confidence", conf)

    def __len__(self):
        return len(self.indices)


# ---------------------------------------------------------------- EMB1 files


def write_embeddings(X, path) -> None:
    X = np.asarray(X)
    if X.ndim != 2:
        raise ValueError("expected a 2-D array")
    n, d = X.shape
    payload = np.ascontiguousarray(X, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(EMB_MAGIC, n, d))
        fh.write(payload.tobytes())


def read_embeddings(path) -> np.ndarray:
    """Read an EMB1 file into an ``(n, d)`` float32 array."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[:4] != EMB_MAGIC:
        raise BadMagicError(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < _HEADER.size:
        raise TruncatedPayloadError(f"{path}: truncated header")
    _, n, d = _HEADER.unpack_from(raw)
    expected = _HEADER.size + 4 * n * d
    if len(raw) < expected:
        raise TruncatedPayloadError(f"{path}: expected {expected} bytes, found {len(raw)}")
    if len(raw) > expected:
        raise FormatError(f"{path}: {len(raw) - expected} trailing bytes")
    X = np.frombuffer(raw, dtype="<f4", count=n * d, offset=_HEADER.size).reshape(n, d)
    if not np.all(np.isfinite(X)):
        bad = int(np.argwhere(~np.isfinite(X))[0, 0])
        raise NonFiniteError(f"{path}: non-finite entry in row {bad}")
    return X.astype(np.float32)


# ------------------------------------------------------------------ CSV files


def _read_rows(path, ncols):
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != ncols:
                raise FormatError(f"{path}:{lineno}: expected {ncols} fields")
            rows.append(parts)
    return rows


def read_labels(path, n_classes: int | None = None, n_points: int | None = None) -> LabeledSet:
    """Parse a labels CSV.

    ``n_classes`` defaults to ``max(class_id) + 1``.  When ``n_points`` is
    given, indices must be below it.
    """
    rows = _read_rows(path, 2)
    try:
        idx = np.array([int(r[0]) for r in rows], dtype=np.int64)
        cls = np.array([int(r[1]) for r in rows], dtype=np.int64)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if n_classes is None:
        n_classes = int(cls.max()) + 1 if len(cls) else 1
    if n_points is not None and len(idx) and idx.max() >= n_points:
        raise IndexRangeError(f"{path}: index {int(idx.max())} >= n={n_points}")
    return LabeledSet(idx, cls, n_classes)


def write_labels(labels: LabeledSet, path) -> None:
    with open(path, "w") as fh:
        for i, c in zip(labels.indices, labels.classes):
            fh.write(f"{i},{c}\n")


def write_pseudo_labels(pseudo: PseudoLabelSet, path) -> None:
    with open(path, "w") as fh:
        for i, c, a in zip(pseudo.indices, pseudo.labels, pseudo.confidence):
            fh.write(f"{i},{c},{a:.17g}\n")


def read_pseudo_labels(path) -> PseudoLabelSet:
    rows = _read_rows(path, 3)
    try:
        return PseudoLabelSet(
            [int(r[0]) for r in rows],
            [int(r[1]) for r in rows],
            [float(r[2]) for r in rows],
        )
    except ValueError as exc:
        if isinstance(exc, LabelError):
            raise
        raise FormatError(f"{path}: {exc}") from None


def write_index_sidecar(indices, path) -> None:
    with open(path, "w") as fh:
        for i in indices:
            fh.write(f"{int(i)}\n")


def read_index_sidecar(path) -> np.ndarray:
    rows = _read_rows(path, 1)
    return np.array([int(r[0]) for r in rows], dtype=np.int64)
