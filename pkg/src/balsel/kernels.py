"""Similarity kernels over gradient embeddings, plus a binary dump format.

Similarity between two embeddings is shifted cosine, (1 + cos)/2, which
maps into [0, 1] so that a value of 1 means "same direction" and 0 means
"opposite". Zero-norm embeddings (a perfectly confident, perfectly
fitted point) have no direction; their similarity to anything is pinned
at the midpoint 0.5 and a warning is raised.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .data import PoolView
from .surrogate import (
    GradientEmbeddingSet,
    ModelParams,
    embed_labeled,
    gradient_embedding,
    hypothesized_label,
)

_HEADER = "<qq"  # two little-endian int64: rows, cols


@dataclass(frozen=True)
class SimilarityKernel:
    """A rows x cols block of pairwise similarities in [0, 1].

    ``row_ids`` / ``col_ids`` name the dataset points behind each axis
    (``None`` for anonymous kernels). When both axes carry ids, a point
    appearing on both must be maximally similar to itself, and identical
    id tuples force a symmetric matrix.
    """

    values: np.ndarray
    row_ids: tuple | None = None
    col_ids: tuple | None = None

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValueError(f"kernel must be 2-D, got shape {vals.shape}")
        if vals.size and (vals.min() < -1e-9 or vals.max() > 1 + 1e-9):
            raise ValueError(
                f"similarities must lie in [0, 1], found range "
                f"[{vals.min()}, {vals.max()}]"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        for name, ids, count in (
            ("row_ids", self.row_ids, vals.shape[0]),
            ("col_ids", self.col_ids, vals.shape[1]),
        ):
            if ids is not None:
                ids = tuple(int(i) for i in ids)
                if len(ids) != count:
                    raise ValueError(f"{len(ids)} {name} for {count} axis entries")
                object.__setattr__(self, name, ids)
        if self.row_ids is not None and self.col_ids is not None:
            if self.row_ids == self.col_ids:
                if not np.allclose(vals, vals.T, atol=1e-12):
                    raise ValueError("kernel with identical axes must be symmetric")
            col_pos = {i: j for j, i in enumerate(self.col_ids)}
            shared = [
                (r, col_pos[i]) for r, i in enumerate(self.row_ids) if i in col_pos
            ]
            if shared:
                rr, cc = zip(*shared)
                if np.abs(vals[list(rr), list(cc)] - 1.0).max() > 1e-9:
                    raise ValueError("self-similarity must equal 1")

    @property
    def shape(self):
        return self.values.shape


def _vectors(obj) -> np.ndarray:
    if isinstance(obj, GradientEmbeddingSet):
        return obj.vectors
    return np.atleast_2d(np.asarray(obj, dtype=np.float64))


def _ids(obj) -> tuple | None:
    return obj.ids if isinstance(obj, GradientEmbeddingSet) else None


def cosine_kernel(rows, cols) -> SimilarityKernel:
    """Shifted-cosine similarity block between two embedding sets.

    Accepts tagged ``GradientEmbeddingSet`` values (propagating their
    ids onto the kernel axes) or plain arrays (anonymous axes).
    """
    row_vecs, col_vecs = _vectors(rows), _vectors(cols)
    if row_vecs.shape[1] != col_vecs.shape[1]:
        raise ValueError(
            f"embedding widths differ: {row_vecs.shape[1]} vs {col_vecs.shape[1]}"
        )
    rn = np.linalg.norm(row_vecs, axis=1)
    cn = np.linalg.norm(col_vecs, axis=1)
    zero_rows = rn == 0
    zero_cols = cn == 0
    if zero_rows.any() or zero_cols.any():
        warnings.warn(
            f"{int(zero_rows.sum())} row / {int(zero_cols.sum())} col embeddings "
            "have zero norm; their similarities default to 0.5"
        )
    rsafe = np.where(zero_rows, 1.0, rn)
    csafe = np.where(zero_cols, 1.0, cn)
    cos = (row_vecs / rsafe[:, None]) @ (col_vecs / csafe[:, None]).T
    cos[zero_rows, :] = 0.0
    cos[:, zero_cols] = 0.0
    vals = np.clip((1.0 + cos) / 2.0, 0.0, 1.0)
    row_ids, col_ids = _ids(rows), _ids(cols)
    if row_ids is not None and col_ids is not None:
        # A point is identical to itself even when its embedding has no
        # direction, so shared-id cells are pinned to exact 1.
        col_pos = {i: j for j, i in enumerate(col_ids)}
        for r, i in enumerate(row_ids):
            if i in col_pos:
                vals[r, col_pos[i]] = 1.0
    return SimilarityKernel(vals, row_ids, col_ids)


@dataclass(frozen=True)
class RoundKernels:
    """Everything the per-class selection step needs for one round.

    query_kernel: labeled x unlabeled similarities. Rows use the true
    labels of the labeled points; columns use each unlabeled point's
    hypothesized (argmax) label, since its true label is still hidden.
    ground_kernel: unlabeled x unlabeled, built only when asked for
    (the one objective that sweeps a ground set needs it).
    """

    query_kernel: SimilarityKernel
    ground_kernel: SimilarityKernel | None
    labeled_idx: tuple
    labeled_labels: np.ndarray
    unlabeled_idx: tuple
    hypothesized: np.ndarray


class BuildCounter:
    """Process-wide tally of kernel builds, for complexity assertions."""

    def __init__(self):
        self.ground = 0
        self.query = 0

    def reset(self):
        self.ground = 0
        self.query = 0


BUILD_COUNTER = BuildCounter()


def build_round_kernels(
    view: PoolView, params: ModelParams, with_ground: bool
) -> RoundKernels:
    """Gradient embeddings and kernels for one selection round.

    The ground kernel is built at most once here and shared by every
    per-class objective downstream.
    """
    lab = embed_labeled(params, view)
    unl_feats = view.unlabeled_features
    hyp = hypothesized_label(params, unl_feats)
    unl = GradientEmbeddingSet(
        gradient_embedding(params, unl_feats, hyp),
        view.unlabeled_idx,
        "hypothesized_label",
    )
    assert lab.source == "true_label" and unl.source == "hypothesized_label"
    query = cosine_kernel(lab, unl)
    BUILD_COUNTER.query += 1
    ground = None
    if with_ground:
        ground = cosine_kernel(unl, unl)
        BUILD_COUNTER.ground += 1
    return RoundKernels(
        query_kernel=query,
        ground_kernel=ground,
        labeled_idx=view.labeled_idx,
        labeled_labels=view.labeled_labels,
        unlabeled_idx=view.unlabeled_idx,
        hypothesized=hyp,
    )


def dump_kernel(kernel: SimilarityKernel, path) -> None:
    """Write dims as two int64 then the row-major float64 payload."""
    rows, cols = kernel.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(_HEADER, rows, cols))
        fh.write(np.ascontiguousarray(kernel.values).tobytes(order="C"))


def load_kernel(path) -> SimilarityKernel:
    with open(path, "rb") as fh:
        head = fh.read(struct.calcsize(_HEADER))
        if len(head) != struct.calcsize(_HEADER):
            raise ValueError(f"{path}: truncated header")
        rows, cols = struct.unpack(_HEADER, head)
        if rows < 0 or cols < 0:
            raise ValueError(f"{path}: negative dimensions ({rows}, {cols})")
        payload = fh.read()
    expected = rows * cols * 8
    if len(payload) != expected:
        raise ValueError(
            f"{path}: payload holds {len(payload)} bytes, expected {expected}"
        )
    values = np.frombuffer(payload, dtype="<f8").reshape(rows, cols)
    return SimilarityKernel(values.copy())
