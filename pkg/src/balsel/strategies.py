"""Acquisition strategies: per-class SMI selection and three baselines.

All strategies see only a ``PoolView`` (no unlabeled labels) and return
dataset ids drawn from its unlabeled pool. The SMI strategy splits the
round budget into per-class quotas, builds one query set per class from
that class's labeled examples, and greedily maximizes the chosen
objective per class, excluding ids already taken this round.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import PoolView
from .kernels import RoundKernels
from .maximizer import GreedyConfig, maximize
from .smi import make_objective
from .surrogate import (
    ModelParams,
    gradient_embedding,
    hypothesized_label,
    predict_proba,
    predictive_entropy,
)

STRATEGIES = ("random", "entropy", "badge", "gcmi", "flvmi", "flqmi")


@dataclass(frozen=True)
class RoundPlan:
    """Per-class quotas for one selection round, after redistribution."""

    batch: int
    quotas: tuple

    def __post_init__(self):
        if sum(self.quotas) != self.batch:
            raise ValueError(
                f"quotas {self.quotas} do not sum to batch {self.batch}"
            )


@dataclass(frozen=True)
class SelectionResult:
    """Chosen dataset ids, with per-class provenance for quota strategies."""

    ids: tuple
    by_class: dict | None = None


def plan_round(batch: int, num_classes: int, labeled_counts) -> RoundPlan:
    """Split ``batch`` evenly over classes, then move quota away from
    classes that have no labeled examples (they cannot form a query
    set). Remainders always go to the lowest class ids.
    """
    if batch < 1:
        raise ValueError("batch must be >= 1")
    counts = np.asarray(labeled_counts, dtype=np.int64)
    if counts.shape != (num_classes,):
        raise ValueError(f"labeled_counts must have length {num_classes}")
    base, rem = divmod(batch, num_classes)
    quotas = [base + (1 if c < rem else 0) for c in range(num_classes)]
    eligible = [c for c in range(num_classes) if counts[c] > 0]
    if not eligible:
        raise ValueError("no class has labeled examples; seed the pool first")
    empty = [c for c in range(num_classes) if counts[c] == 0]
    extra = sum(quotas[c] for c in empty)
    if extra:
        warnings.warn(
            f"classes {empty} have no labeled examples; "
            f"redistributing their quota of {extra} across {eligible}"
        )
    for c in empty:
        quotas[c] = 0
    add, rem2 = divmod(extra, len(eligible))
    for rank, c in enumerate(eligible):
        quotas[c] += add + (1 if rank < rem2 else 0)
    return RoundPlan(batch=batch, quotas=tuple(quotas))


def _check_batch(view: PoolView, batch: int) -> None:
    if batch < 1:
        raise ValueError("batch must be >= 1")
    if batch > len(view.unlabeled_idx):
        raise ValueError(
            f"batch {batch} exceeds unlabeled pool size {len(view.unlabeled_idx)}"
        )


def smi_select(
    view: PoolView,
    kernels: RoundKernels,
    kind: str,
    batch: int,
    greedy: GreedyConfig = GreedyConfig(),
) -> SelectionResult:
    """Class-balanced selection by per-class SMI maximization.

    Classes run in ascending id order; each class's greedy works over
    the unlabeled positions not already chosen earlier this round, so
    one round never picks a point twice. A batch larger than the pool
    clamps to everything remaining.
    """
    if batch < 1:
        raise ValueError("batch must be >= 1")
    batch = min(batch, len(view.unlabeled_idx))
    if batch == 0:
        raise ValueError("unlabeled pool is empty")
    if kernels.unlabeled_idx != view.unlabeled_idx:
        raise ValueError("kernels were built for a different pool state")
    labels = np.asarray(kernels.labeled_labels)
    counts = np.bincount(labels, minlength=view.num_classes)
    plan = plan_round(batch, view.num_classes, counts)
    query_lu = kernels.query_kernel.values  # labeled x unlabeled
    ground = kernels.ground_kernel.values if kernels.ground_kernel else None
    taken: set = set()
    picked: list = []
    by_class: dict = {}
    for cls in range(view.num_classes):
        quota = plan.quotas[cls]
        if quota == 0:
            continue
        rows = np.flatnonzero(labels == cls)
        query_sim = query_lu[rows, :].T  # candidate x query orientation
        objective = make_objective(kind, query_sim, ground)
        candidates = [p for p in range(len(view.unlabeled_idx)) if p not in taken]
        result = maximize(objective, candidates, quota, greedy)
        taken.update(result.selected)
        ids = tuple(view.unlabeled_idx[p] for p in result.selected)
        by_class[cls] = ids
        picked.extend(ids)
    return SelectionResult(ids=tuple(picked), by_class=by_class)


def random_select(view: PoolView, batch: int, seed: int) -> SelectionResult:
    """Uniform sample without replacement from the unlabeled pool."""
    _check_batch(view, batch)
    rng = np.random.default_rng(seed)
    picks = rng.choice(np.array(view.unlabeled_idx), size=batch, replace=False)
    return SelectionResult(ids=tuple(int(i) for i in picks))


def entropy_select(view: PoolView, params: ModelParams, batch: int) -> SelectionResult:
    """Top-``batch`` unlabeled points by predictive entropy.

    Ties resolve toward the lower dataset id.
    """
    _check_batch(view, batch)
    ids = np.array(view.unlabeled_idx, dtype=np.int64)
    ent = predictive_entropy(predict_proba(params, view.unlabeled_features))
    order = np.lexsort((ids, -ent))
    return SelectionResult(ids=tuple(int(i) for i in ids[order[:batch]]))


def badge_select(
    view: PoolView, params: ModelParams, batch: int, seed: int
) -> SelectionResult:
    """k-means++ seeding over hypothesized-label gradient embeddings.

    The first pick is drawn with probability proportional to squared
    embedding norm, later picks proportional to squared distance to the
    nearest already-picked embedding. When every weight is zero (all
    remaining embeddings duplicate a picked one) the draw falls back to
    uniform over the remaining pool.
    """
    _check_batch(view, batch)
    rng = np.random.default_rng(seed)
    feats = view.unlabeled_features
    emb = gradient_embedding(params, feats, hypothesized_label(params, feats))
    n = emb.shape[0]
    remaining = np.ones(n, dtype=bool)
    weights = np.sum(emb**2, axis=1)
    positions = []
    for _ in range(batch):
        w = np.where(remaining, weights, 0.0)
        total = w.sum()
        if total > 0:
            pick = int(rng.choice(n, p=w / total))
        else:
            pool = np.flatnonzero(remaining)
            pick = int(rng.choice(pool))
        positions.append(pick)
        remaining[pick] = False
        dist = np.sum((emb - emb[pick]) ** 2, axis=1)
        np.minimum(weights, dist, out=weights)
    return SelectionResult(
        ids=tuple(int(view.unlabeled_idx[p]) for p in positions)
    )
