"""Cheap multinomial logistic-regression surrogate.

Trained from zero weights by full-batch gradient descent on the
L2-regularized mean cross-entropy, so training is deterministic:
the same data and config give bit-identical parameters. Besides
predictions, the model supplies the per-point loss-gradient embeddings
that the similarity kernels and the k-means++ baseline consume.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import PoolView


@dataclass(frozen=True)
class SurrogateConfig:
    learning_rate: float = 3e-3
    epochs: int = 200
    l2: float = 1e-4

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")


@dataclass(frozen=True)
class ModelParams:
    """Weights (C x d) and bias (C,) of a fitted softmax classifier."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise ValueError(f"bad parameter shapes {w.shape}, {b.shape}")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def dump_json(self, path) -> None:
        payload = {
            "num_classes": self.num_classes,
            "dim": self.dim,
            "weights": [[repr(v) for v in row] for row in self.weights.tolist()],
            "bias": [repr(v) for v in self.bias.tolist()],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load_json(cls, path) -> "ModelParams":
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        weights = np.array(
            [[float(v) for v in row] for row in payload["weights"]], dtype=np.float64
        )
        bias = np.array([float(v) for v in payload["bias"]], dtype=np.float64)
        if weights.shape != (payload["num_classes"], payload["dim"]):
            raise ValueError(f"{path}: weight shape does not match declared dims")
        return cls(weights, bias)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def predict_proba(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Class-probability rows for each feature row."""
    feats = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if feats.shape[1] != params.dim:
        raise ValueError(
            f"feature width {feats.shape[1]} does not match model dim {params.dim}"
        )
    return _softmax(feats @ params.weights.T + params.bias)


def loss(
    params: ModelParams, features: np.ndarray, labels: np.ndarray, l2: float
) -> float:
    """L2-regularized mean cross-entropy (the training objective)."""
    probs = predict_proba(params, features)
    n = probs.shape[0]
    nll = -np.log(probs[np.arange(n), labels] + 1e-300).mean()
    return float(nll + 0.5 * l2 * (np.sum(params.weights**2) + np.sum(params.bias**2)))


def loss_gradient(
    params: ModelParams, features: np.ndarray, labels: np.ndarray, l2: float
):
    """Gradient of ``loss`` with respect to weights and bias."""
    feats = np.atleast_2d(np.asarray(features, dtype=np.float64))
    n = feats.shape[0]
    probs = predict_proba(params, feats)
    resid = probs.copy()
    resid[np.arange(n), labels] -= 1.0
    grad_w = resid.T @ feats / n + l2 * params.weights
    grad_b = resid.mean(axis=0) + l2 * params.bias
    return grad_w, grad_b


def fit(
    features: np.ndarray,
    labels: np.ndarray,
    num_classes: int,
    config: SurrogateConfig = SurrogateConfig(),
) -> ModelParams:
    """Full-batch gradient descent from zero initialization."""
    feats = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    if feats.shape[0] == 0:
        raise ValueError("cannot fit on an empty training set")
    if labels.shape != (feats.shape[0],):
        raise ValueError("labels do not match feature rows")
    weights = np.zeros((num_classes, feats.shape[1]))
    bias = np.zeros(num_classes)
    for _ in range(config.epochs):
        params = ModelParams(weights, bias)
        grad_w, grad_b = loss_gradient(params, feats, labels, config.l2)
        weights = weights - config.learning_rate * grad_w
        bias = bias - config.learning_rate * grad_b
    return ModelParams(weights, bias)


def train_surrogate(
    view: PoolView, config: SurrogateConfig = SurrogateConfig()
) -> ModelParams:
    """Fit on the labeled slice of an acquisition-safe pool view."""
    return fit(view.labeled_features, view.labeled_labels, view.num_classes, config)


def hypothesized_label(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Most probable class per row (ties go to the lowest class id)."""
    return predict_proba(params, features).argmax(axis=1)


def predictive_entropy(probs: np.ndarray) -> np.ndarray:
    """Shannon entropy (nats) of each probability row, with 0 ln 0 = 0.

    Rows must be probability vectors: entries in [0, 1] summing to 1,
    within a 1e-6 tolerance.
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    if probs.size and (probs.min() < -1e-6 or probs.max() > 1 + 1e-6):
        raise ValueError("entries outside [0, 1]: not probability vectors")
    sums = probs.sum(axis=1)
    if probs.size and np.abs(sums - 1.0).max() > 1e-6:
        raise ValueError("rows do not sum to 1: not probability vectors")
    clipped = np.clip(probs, 0.0, 1.0)
    terms = np.zeros_like(clipped)
    mask = clipped > 0
    terms[mask] = clipped[mask] * np.log(clipped[mask])
    return -terms.sum(axis=1)


def gradient_embedding(
    params: ModelParams, features: np.ndarray, labels: np.ndarray
) -> np.ndarray:
    """Per-point last-layer loss gradients, one flat row per input row.

    Row i is (p_i - onehot(labels_i)) outer x_i flattened row-major by
    class: entries [c*d : (c+1)*d] belong to class c. The bias part and
    the L2 term are excluded on purpose; only the data-driven direction
    matters for similarity.
    """
    feats = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= params.num_classes):
        raise ValueError(
            f"labels must lie in [0, {params.num_classes}), "
            f"found range [{labels.min()}, {labels.max()}]"
        )
    probs = predict_proba(params, feats)
    resid = probs.copy()
    resid[np.arange(feats.shape[0]), labels] -= 1.0
    return (resid[:, :, None] * feats[:, None, :]).reshape(feats.shape[0], -1)


@dataclass(frozen=True)
class GradientEmbeddingSet:
    """Tagged gradient embeddings for an ordered set of dataset ids.

    ``source`` records which labels produced the embeddings: the true
    labels of labeled points or the model's hypothesized labels for
    unlabeled ones. Kernel builders check the tag so the two are never
    mixed up.
    """

    vectors: np.ndarray
    ids: tuple
    source: str

    def __post_init__(self):
        vecs = np.asarray(self.vectors, dtype=np.float64)
        if vecs.ndim != 2:
            raise ValueError("vectors must be 2-D")
        if len(self.ids) != vecs.shape[0]:
            raise ValueError(
                f"{len(self.ids)} ids for {vecs.shape[0]} embedding rows"
            )
        if self.source not in ("true_label", "hypothesized_label"):
            raise ValueError(f"unknown source tag {self.source!r}")
        vecs.setflags(write=False)
        object.__setattr__(self, "vectors", vecs)
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))


def embed_labeled(params: ModelParams, view) -> GradientEmbeddingSet:
    """True-label gradient embeddings of a view's labeled points."""
    vecs = gradient_embedding(params, view.labeled_features, view.labeled_labels)
    return GradientEmbeddingSet(vecs, view.labeled_idx, "true_label")


def embed_unlabeled(params: ModelParams, view) -> GradientEmbeddingSet:
    """Hypothesized-label gradient embeddings of a view's unlabeled points."""
    feats = view.unlabeled_features
    vecs = gradient_embedding(params, feats, hypothesized_label(params, feats))
    return GradientEmbeddingSet(vecs, view.unlabeled_idx, "hypothesized_label")
