"""Pseudo-labels and margin confidences from propagated logits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import PseudoLabelSet
from .propagation import PropagationResult

DEFAULT_TEMPERATURE = 40.0
DEFAULT_ALPHA_THRESHOLD = 0.01


@dataclass(frozen=True)
class ConfidenceParams:
    temperature: float = DEFAULT_TEMPERATURE
    alpha_threshold: float = DEFAULT_ALPHA_THRESHOLD

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")
        if not 0 <= self.alpha_threshold < 1:
            raise ValueError("alpha_threshold must lie in [0, 1)")


def normalize_logits(z, temperature: float = DEFAULT_TEMPERATURE) -> np.ndarray:
    """Softmax of ``z / temperature`` along the last axis."""
    if not temperature > 0:
        raise ValueError("temperature must be > 0")
    z = np.asarray(z, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def margin_confidence(p) -> np.ndarray | float:
    """Top probability minus the runner-up, along the last axis."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1] < 2:
        raise ValueError("margin confidence needs at least two classes")
    top2 = -np.partition(-p, 1, axis=-1)[..., :2]
    alpha = np.clip(top2[..., 0] - top2[..., 1], 0.0, 1.0)
    return float(alpha) if alpha.ndim == 0 else alpha


def pseudo_label(result: PropagationResult, params: ConfidenceParams = ConfidenceParams()) -> PseudoLabelSet:
    """Argmax labels (ties to the lower class id) weighted by margin.

    Records with confidence below ``params.alpha_threshold`` are dropped and
    counted in ``n_discarded``.
    """
    logits = np.asarray(result.logits, dtype=np.float64)
    labels = np.argmax(logits, axis=1)
    alpha = margin_confidence(normalize_logits(logits, params.temperature))
    keep = alpha >= params.alpha_threshold
    return PseudoLabelSet(
        result.indices[keep], labels[keep], alpha[keep], n_discarded=int((~keep).sum())
    )


def confidence_summary(pseudo: PseudoLabelSet, bins: int = 10) -> str:
    """CSV text: kept/discarded counts, then one ``bin_lo,bin_hi,count`` row
    per uniform confidence bin on ``[0, 1]``."""
    counts, edges = np.histogram(pseudo.confidence, bins=bins, range=(0.0, 1.0))
    lines = [f"kept,{len(pseudo)}", f"discarded,{pseudo.n_discarded}"]
    lines += [f"{lo:.1f},{hi:.1f},{c}" for lo, hi, c in zip(edges[:-1], edges[1:], counts)]
    return "\n".join(lines) + "\n"
