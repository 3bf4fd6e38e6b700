"""Pseudo-label self-training on top of a labeled/unlabeled pool.

Each pass fits the surrogate on the labeled points plus the current
pseudo-labeled points, then reassigns pseudo-labels from scratch: every
unlabeled point whose top predicted probability clears the confidence
threshold joins the next pass with its predicted label. Points below
the threshold drop back out, so membership can shrink as well as grow.
Training stops when a pass mints no new pseudo-labels or the pass limit
is reached. The labeled set itself is never altered, and true labels of
unlabeled points are never read.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import PoolView
from .surrogate import ModelParams, SurrogateConfig, fit, predict_proba


@dataclass(frozen=True)
class PseudoLabelConfig:
    threshold: float = 0.95
    max_iterations: int = 10

    def __post_init__(self):
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError("threshold must be in (0, 1]")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")


@dataclass(frozen=True)
class PseudoLabelResult:
    """Final model plus, per pass, how many unseen points crossed the bar."""

    params: ModelParams
    pseudo_ids: tuple
    pseudo_labels: np.ndarray
    newly_added: tuple

    @property
    def passes(self) -> int:
        return len(self.newly_added)


def pseudo_label_train(
    view: PoolView,
    surrogate: SurrogateConfig = SurrogateConfig(),
    config: PseudoLabelConfig = PseudoLabelConfig(),
) -> PseudoLabelResult:
    """Iterative confidence-thresholded self-training.

    Every training pass weighs real and pseudo-labels equally. The
    returned trace ``newly_added`` counts, per pass, the unlabeled
    points that gained a pseudo-label without having held one before
    the pass; a trailing zero is the stop signal (absent only when the
    pass limit cut training short).
    """
    if not view.labeled_idx:
        raise ValueError("self-training needs at least one labeled point")
    if len(view.labeled_idx) < view.num_classes:
        warnings.warn(
            f"only {len(view.labeled_idx)} labeled points for "
            f"{view.num_classes} classes; pseudo-labels may be unreliable"
        )
    lab_feats = view.labeled_features
    lab_labels = view.labeled_labels
    unl_ids = np.array(view.unlabeled_idx, dtype=np.int64)
    unl_feats = view.unlabeled_features
    params = fit(lab_feats, lab_labels, view.num_classes, surrogate)
    ever_pseudo: set = set()
    member = np.zeros(len(unl_ids), dtype=bool)
    pseudo = np.zeros(len(unl_ids), dtype=np.int64)
    trace: list = []
    for _ in range(config.max_iterations):
        probs = predict_proba(params, unl_feats)
        member = probs.max(axis=1) >= config.threshold
        pseudo = probs.argmax(axis=1)
        fresh = [int(i) for i in np.flatnonzero(member) if int(i) not in ever_pseudo]
        trace.append(len(fresh))
        if not fresh:
            break
        ever_pseudo.update(fresh)
        train_x = np.vstack([lab_feats, unl_feats[member]])
        train_y = np.concatenate([lab_labels, pseudo[member]])
        params = fit(train_x, train_y, view.num_classes, surrogate)
    rows = np.flatnonzero(member)
    return PseudoLabelResult(
        params=params,
        pseudo_ids=tuple(int(unl_ids[r]) for r in rows),
        pseudo_labels=pseudo[rows].copy(),
        newly_added=tuple(trace),
    )
