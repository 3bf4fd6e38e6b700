"""Evaluation metrics: imbalance ratio, accuracy, per-class recall.

The imbalance ratio measures how skewed an acquired set is across a
rare/frequent class partition:

    IR(A) = (|A_F| * num_rare_classes) / (|A_R| * num_frequent_classes)

where A_F / A_R are the acquired points belonging to frequent / rare
classes. Equivalently it is the ratio of the average per-frequent-class
count to the average per-rare-class count, so a perfectly class-
balanced acquisition has IR = 1 and values above 1 mean the acquisition
still over-represents frequent classes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .surrogate import ModelParams, predict_proba


@dataclass(frozen=True)
class MetricSpec:
    """The rare/frequent class partition the imbalance ratio is judged on."""

    rare_classes: frozenset
    frequent_classes: frozenset

    def __post_init__(self):
        rare = frozenset(int(c) for c in self.rare_classes)
        freq = frozenset(int(c) for c in self.frequent_classes)
        object.__setattr__(self, "rare_classes", rare)
        object.__setattr__(self, "frequent_classes", freq)
        if rare & freq:
            raise ValueError("rare and frequent classes overlap")
        if not rare or not freq:
            raise ValueError("need at least one rare and one frequent class")


def imbalance_ratio(labels, spec: MetricSpec) -> float | None:
    """Frequent-vs-rare skew of an acquired label multiset.

    Returns ``inf`` when the acquisition holds frequent points but no
    rare ones, and ``None`` (undefined) when it holds neither.
    """
    labels = np.asarray(labels, dtype=np.int64)
    in_rare = int(np.isin(labels, sorted(spec.rare_classes)).sum())
    in_freq = int(np.isin(labels, sorted(spec.frequent_classes)).sum())
    if in_rare == 0 and in_freq == 0:
        return None
    if in_rare == 0:
        return float("inf")
    return float(
        (in_freq * len(spec.rare_classes)) / (in_rare * len(spec.frequent_classes))
    )


def accuracy(params: ModelParams, features, labels) -> float:
    """Fraction of rows whose argmax prediction matches the label."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("cannot score an empty evaluation set")
    preds = predict_proba(params, features).argmax(axis=1)
    return float((preds == labels).mean())


def per_class_recall(params: ModelParams, features, labels, num_classes: int):
    """Recall per class; classes absent from ``labels`` get NaN."""
    labels = np.asarray(labels, dtype=np.int64)
    preds = predict_proba(params, features).argmax(axis=1)
    out = np.full(num_classes, np.nan)
    for cls in range(num_classes):
        rows = labels == cls
        if rows.any():
            out[cls] = float((preds[rows] == cls).mean())
    return out
