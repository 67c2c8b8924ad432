"""Label propagation over learned similarity metrics.

A few labeled points and a large unlabeled set of embeddings go in;
confidence-weighted pseudo-labels and a classifier trained on them come out.
"""
from .core import (
    KernelSpec,
    LabeledSet,
    PseudoLabelSet,
    read_embeddings,
    read_labels,
    read_pseudo_labels,
    write_embeddings,
    write_labels,
    write_pseudo_labels,
)
from .similarity import SimilarityGraph, build_knn_graph, similarity, similarity_to_targets
from .spectral import (
    SpectralModel,
    eigendecompose,
    fit_spectral,
    normalized_laplacian,
    spectral_embedding,
)
from .propagation import (
    PropagationResult,
    chunked_propagate,
    nn_propagate,
    propagate,
    spectral_propagate,
)
from .confidence import ConfidenceParams, margin_confidence, normalize_logits, pseudo_label
from .metric import LinearEmbedder, TrainConfig, embed, instance_loss_grad, nca_loss_grad, train
from .classifier import (
    ClassifierConfig,
    SoftmaxClassifier,
    predict,
    train_classifier,
    weighted_ce_loss_grad,
)
from .evaluation import (
    accumulated_accuracy,
    gen_synthetic,
    pseudo_label_accuracy,
    pseudo_label_map,
    random_features,
    split_labeled,
)

__version__ = "0.1.0"
