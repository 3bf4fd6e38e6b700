"""Datasets, labeled/unlabeled/test pools, synthetic generation, CSV I/O.

The pool keeps true labels for every row, but acquisition code only ever
sees a ``PoolView``, which exposes labels for the labeled rows alone.
Moving a point from the unlabeled to the labeled side is the act of
"buying" its label from the oracle.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

# Frequent-class centers sit at MEAN_SCALE * (rotated basis vertex); the
# spread arguments control within-cluster noise, so MEAN_SCALE/spread sets
# separability between frequent classes.
MEAN_SCALE = 4.0


class DataError(ValueError):
    """Raised for malformed datasets or dataset files."""


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with one integer class label per row."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if feats.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {feats.shape}")
        if labels.shape != (feats.shape[0],):
            raise DataError(
                f"labels shape {labels.shape} does not match {feats.shape[0]} rows"
            )
        if not np.all(np.isfinite(feats)):
            raise DataError("features contain non-finite entries")
        if self.num_classes < 1:
            raise DataError("num_classes must be >= 1")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise DataError(
                f"labels must lie in [0, {self.num_classes}), "
                f"found range [{labels.min()}, {labels.max()}]"
            )
        feats.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def class_histogram(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass(frozen=True)
class ImbalanceSpec:
    """How many points each rare and each frequent class contributes."""

    rare_classes: frozenset
    frequent_classes: frozenset
    rare_count: int
    frequent_count: int

    def __post_init__(self):
        rare = frozenset(int(c) for c in self.rare_classes)
        freq = frozenset(int(c) for c in self.frequent_classes)
        object.__setattr__(self, "rare_classes", rare)
        object.__setattr__(self, "frequent_classes", freq)
        if rare & freq:
            raise DataError(f"rare and frequent classes overlap: {sorted(rare & freq)}")
        ids = rare | freq
        if ids != set(range(len(ids))):
            raise DataError(f"class ids must be exactly 0..C-1, got {sorted(ids)}")
        if len(ids) < 2:
            raise DataError("need at least 2 classes")
        if self.rare_count < 1 or self.frequent_count < 1:
            raise DataError("per-class counts must be >= 1")
        if self.rare_count >= self.frequent_count:
            raise DataError(
                f"rare_count ({self.rare_count}) must be smaller than "
                f"frequent_count ({self.frequent_count})"
            )

    @property
    def num_classes(self) -> int:
        return len(self.rare_classes) + len(self.frequent_classes)

    def count_for(self, cls: int) -> int:
        return self.rare_count if cls in self.rare_classes else self.frequent_count

    def total(self) -> int:
        return (
            self.rare_count * len(self.rare_classes)
            + self.frequent_count * len(self.frequent_classes)
        )


@dataclass(frozen=True)
class PoolView:
    """What acquisition strategies are allowed to see.

    Labels are exposed for labeled rows only; the true labels of
    unlabeled rows are deliberately unreachable from here.
    """

    features: np.ndarray
    num_classes: int
    labeled_idx: tuple
    labeled_labels: np.ndarray
    unlabeled_idx: tuple

    @property
    def labeled_features(self) -> np.ndarray:
        return self.features[list(self.labeled_idx)]

    @property
    def unlabeled_features(self) -> np.ndarray:
        return self.features[list(self.unlabeled_idx)]


@dataclass(frozen=True)
class PoolState:
    """A dataset partitioned into labeled / unlabeled / test index sets."""

    dataset: Dataset
    labeled_idx: tuple = ()
    unlabeled_idx: tuple = ()
    test_idx: tuple = ()

    def __post_init__(self):
        lab = tuple(int(i) for i in self.labeled_idx)
        unl = tuple(int(i) for i in self.unlabeled_idx)
        tst = tuple(int(i) for i in self.test_idx)
        object.__setattr__(self, "labeled_idx", lab)
        object.__setattr__(self, "unlabeled_idx", unl)
        object.__setattr__(self, "test_idx", tst)
        sets = [set(lab), set(unl), set(tst)]
        if set.union(*sets) and max(set.union(*sets)) >= self.dataset.n:
            raise DataError("partition index out of range")
        if len(lab) + len(unl) + len(tst) != len(set.union(*sets)):
            raise DataError("labeled/unlabeled/test sets must be pairwise disjoint")

    def view(self) -> PoolView:
        """Acquisition-safe view: no path to unlabeled labels."""
        labeled_labels = self.dataset.labels[list(self.labeled_idx)].copy()
        labeled_labels.setflags(write=False)
        return PoolView(
            features=self.dataset.features,
            num_classes=self.dataset.num_classes,
            labeled_idx=self.labeled_idx,
            labeled_labels=labeled_labels,
            unlabeled_idx=self.unlabeled_idx,
        )

    def label_batch(self, ids) -> "PoolState":
        """Oracle step: move ``ids`` from unlabeled to labeled.

        This is the only sanctioned way selection results learn their
        true labels (by buying them).
        """
        ids = [int(i) for i in ids]
        unl = set(self.unlabeled_idx)
        for i in ids:
            if i not in unl:
                raise DataError(f"point {i} is not in the unlabeled pool")
        if len(set(ids)) != len(ids):
            raise DataError("batch contains duplicate ids")
        chosen = set(ids)
        new_unl = tuple(i for i in self.unlabeled_idx if i not in chosen)
        return replace(
            self,
            labeled_idx=self.labeled_idx + tuple(ids),
            unlabeled_idx=new_unl,
        )


def _rotation(dims: int, rng: np.random.Generator) -> np.ndarray:
    """Random orthogonal matrix (QR of a Gaussian, sign-fixed)."""
    mat = rng.standard_normal((dims, dims))
    q, r = np.linalg.qr(mat)
    return q * np.sign(np.diag(r))


def _class_means(
    spec: ImbalanceSpec, dims: int, rare_offset: float, rng: np.random.Generator
) -> np.ndarray:
    """Frequent anchors on orthogonal directions; rare satellites beside them.

    Each frequent class mean is MEAN_SCALE times one column of a seeded
    random rotation. Each rare class mean is placed next to a partner
    frequent anchor (rare classes cycle over frequent ones, both in
    ascending id order), displaced by ``rare_offset`` along a direction
    orthogonal to every other mean. Rare points therefore live inside a
    frequent neighborhood, the way under-represented classes are near
    look-alike majority classes, while keeping a clean separating
    direction of their own.
    """
    num_classes = spec.num_classes
    if num_classes > dims:
        raise DataError(
            f"cannot place {num_classes} class means with dims={dims}; "
            f"need dims >= num_classes"
        )
    rot = _rotation(dims, rng)
    rare = sorted(spec.rare_classes)
    frequent = sorted(spec.frequent_classes)
    means = np.zeros((num_classes, dims))
    for col, cls in enumerate(frequent):
        means[cls] = MEAN_SCALE * rot[:, col]
    for col, cls in enumerate(rare):
        partner = frequent[col % len(frequent)]
        means[cls] = means[partner] + rare_offset * rot[:, len(frequent) + col]
    return means


def _class_spreads(
    spec: ImbalanceSpec, cluster_spread: float, rare_spread: float
) -> np.ndarray:
    spreads = np.full(spec.num_classes, float(cluster_spread))
    for cls in spec.rare_classes:
        spreads[cls] = float(rare_spread)
    return spreads


def _sample_classes(counts, means: np.ndarray, spreads, rng: np.random.Generator):
    """Draw isotropic Gaussian clusters, class by class in ascending id."""
    blocks, labels = [], []
    for cls, count in enumerate(counts):
        pts = means[cls] + spreads[cls] * rng.standard_normal((count, means.shape[1]))
        blocks.append(pts)
        labels.append(np.full(count, cls, dtype=np.int64))
    return np.vstack(blocks), np.concatenate(labels)


def _check_generator_args(dims, cluster_spread, rare_offset, rare_spread):
    if dims < 2:
        raise DataError("dims must be >= 2")
    if cluster_spread <= 0:
        raise DataError("cluster_spread must be positive")
    if rare_offset <= 0:
        raise DataError("rare_offset must be positive")
    if rare_spread <= 0:
        raise DataError("rare_spread must be positive")


def generate_synthetic(
    spec: ImbalanceSpec,
    dims: int,
    cluster_spread: float = 1.0,
    rare_offset: float = 1.5,
    rare_spread: float = 0.3,
    seed: int = 0,
) -> Dataset:
    """Synthetic imbalanced pool: one Gaussian cluster per class.

    Frequent-class means sit at ``MEAN_SCALE`` times orthogonal rotated
    basis directions with noise ``cluster_spread``; each rare class is a
    tighter cluster (``rare_spread``) displaced ``rare_offset`` from a
    partner frequent mean along its own orthogonal direction (see
    ``_class_means``). Requires dims >= C. Deterministic: same arguments
    give bit-identical data.
    """
    _check_generator_args(dims, cluster_spread, rare_offset, rare_spread)
    mean_ss, point_ss = np.random.SeedSequence(seed).spawn(2)
    means = _class_means(spec, dims, rare_offset, np.random.default_rng(mean_ss))
    spreads = _class_spreads(spec, cluster_spread, rare_spread)
    counts = [spec.count_for(c) for c in range(spec.num_classes)]
    feats, labels = _sample_classes(
        counts, means, spreads, np.random.default_rng(point_ss)
    )
    return Dataset(feats, labels, spec.num_classes)


def generate_pool(
    spec: ImbalanceSpec,
    dims: int,
    cluster_spread: float = 1.0,
    rare_offset: float = 1.5,
    rare_spread: float = 0.3,
    test_per_class: int = 20,
    seed: int = 0,
) -> PoolState:
    """Imbalanced unlabeled pool plus a balanced held-out test block.

    The pool rows are bit-identical to ``generate_synthetic`` with the
    same arguments; the test rows are a separate balanced draw from the
    same cluster distribution and sit at the tail of the feature matrix.
    """
    _check_generator_args(dims, cluster_spread, rare_offset, rare_spread)
    if test_per_class < 0:
        raise DataError("test_per_class must be >= 0")
    mean_ss, point_ss, test_ss = np.random.SeedSequence(seed).spawn(3)
    means = _class_means(spec, dims, rare_offset, np.random.default_rng(mean_ss))
    spreads = _class_spreads(spec, cluster_spread, rare_spread)
    counts = [spec.count_for(c) for c in range(spec.num_classes)]
    pool_feats, pool_labels = _sample_classes(
        counts, means, spreads, np.random.default_rng(point_ss)
    )
    test_feats, test_labels = _sample_classes(
        [test_per_class] * spec.num_classes,
        means,
        spreads,
        np.random.default_rng(test_ss),
    )
    feats = np.vstack([pool_feats, test_feats])
    labels = np.concatenate([pool_labels, test_labels])
    dataset = Dataset(feats, labels, spec.num_classes)
    n_pool = pool_feats.shape[0]
    return PoolState(
        dataset=dataset,
        labeled_idx=(),
        unlabeled_idx=tuple(range(n_pool)),
        test_idx=tuple(range(n_pool, dataset.n)),
    )


def make_pool_from_dataset(
    dataset: Dataset, test_per_class: int, seed: int = 0
) -> PoolState:
    """Carve a balanced test split out of a loaded dataset.

    Picks up to ``test_per_class`` random rows per class for the test
    set (warning when a class falls short); everything else starts
    unlabeled.
    """
    rng = np.random.default_rng(seed)
    test_rows = []
    for cls in range(dataset.num_classes):
        rows = np.flatnonzero(dataset.labels == cls)
        if rows.size < test_per_class:
            warnings.warn(
                f"class {cls} has only {rows.size} rows; test split takes all of them"
            )
        take = min(test_per_class, rows.size)
        if take:
            test_rows.extend(rng.choice(rows, size=take, replace=False).tolist())
    test_set = set(int(i) for i in test_rows)
    return PoolState(
        dataset=dataset,
        labeled_idx=(),
        unlabeled_idx=tuple(i for i in range(dataset.n) if i not in test_set),
        test_idx=tuple(sorted(test_set)),
    )


def seed_round(pool: PoolState, batch: int, seed: int) -> PoolState:
    """First-round labeling: a uniform random batch from the unlabeled pool."""
    if batch < 1:
        raise DataError("batch must be >= 1")
    if batch > len(pool.unlabeled_idx):
        raise DataError(
            f"batch {batch} exceeds unlabeled pool size {len(pool.unlabeled_idx)}"
        )
    rng = np.random.default_rng(seed)
    picks = rng.choice(np.array(pool.unlabeled_idx), size=batch, replace=False)
    return pool.label_batch(picks.tolist())


def load_csv(path, label_column: str = "label") -> Dataset:
    """Load a dataset from a headered CSV with one integer label column.

    Feature columns keep file order; the class count is inferred as
    max label + 1 (with a warning for unpopulated intermediate ids).
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise DataError(
                f"{path}: label column {label_column!r} not found in header {header}"
            )
        label_pos = header.index(label_column)
        feature_cols = [i for i, name in enumerate(header) if i != label_pos]
        feats, labels = [], []
        for row_num, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {row_num} has {len(row)} cells, expected {len(header)}"
                )
            vals = []
            for col in feature_cols:
                try:
                    vals.append(float(row[col]))
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric cell at row {row_num}, "
                        f"column {header[col]!r}: {row[col]!r}"
                    ) from None
            raw = row[label_pos].strip()
            try:
                label = int(raw)
            except ValueError:
                raise DataError(
                    f"{path}: non-integer label at row {row_num}: {raw!r}"
                ) from None
            if label < 0:
                raise DataError(f"{path}: negative label at row {row_num}: {label}")
            feats.append(vals)
            labels.append(label)
    if not feats:
        raise DataError(f"{path}: no data rows")
    labels = np.array(labels, dtype=np.int64)
    num_classes = int(labels.max()) + 1
    present = set(labels.tolist())
    missing = sorted(set(range(num_classes)) - present)
    if missing:
        warnings.warn(f"{path}: classes {missing} have no rows (C inferred as {num_classes})")
    return Dataset(np.array(feats, dtype=np.float64), labels, num_classes)


def save_csv(dataset: Dataset, path, label_column: str = "label") -> None:
    """Write features then the label column, with a header row."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"f{j}" for j in range(dataset.dim)] + [label_column])
        for row, label in zip(dataset.features, dataset.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])
