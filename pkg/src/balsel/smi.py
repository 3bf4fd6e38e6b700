"""Submodular mutual-information objectives for query-guided selection.

Each objective scores a candidate set A against a fixed query set Q
(the labeled examples of one class) through pairwise similarities. All
three are monotone and submodular in A, vanish at A = empty, and share
this interface:

    value()                current committed objective value
    marginal_gain(j)       gain of adding candidate j
    marginal_gains(js)     vectorized gains for many candidates
    commit(j)              add j to the committed set

Conventions: ``query_sim`` has one row per candidate and one column per
query point; ``ground_sim`` (needed only by the ground-coverage form)
is candidate x candidate. A max over an empty set counts as 0.

The three forms:

* ``gcmi``  - pairwise relevance: twice the sum of all candidate-query
  similarities. Modular, so gains never change.
* ``flvmi`` - ground coverage: each ground point contributes the
  smaller of its best similarity into A and into Q, rewarding sets
  that cover the same regions the query covers.
* ``flqmi`` - bidirectional best-match coverage: each query point is
  represented by its best candidate, each candidate by its best query
  point. Rewards joint coverage without needing a ground kernel.
"""

from __future__ import annotations

import numpy as np

KINDS = ("gcmi", "flvmi", "flqmi")


def _check_sim(name: str, sim: np.ndarray) -> np.ndarray:
    sim = np.ascontiguousarray(sim, dtype=np.float64)
    if sim.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {sim.shape}")
    if sim.size and (not np.all(np.isfinite(sim)) or sim.min() < 0):
        raise ValueError(f"{name} must be finite and non-negative")
    return sim


def evaluate_gcmi(query_sim: np.ndarray, selected) -> float:
    """Pairwise-relevance value of an explicit candidate set.

    An empty query set is rejected: pure relevance against nothing is
    meaningless (quota redistribution upstream prevents it).
    """
    if query_sim.shape[1] == 0:
        raise ValueError("gcmi requires a nonempty query set")
    sel = list(selected)
    if not sel:
        return 0.0
    return float(2.0 * query_sim[sel, :].sum())


def evaluate_flvmi(ground_sim: np.ndarray, query_sim: np.ndarray, selected) -> float:
    """Ground-coverage value of an explicit candidate set.

    Every candidate is a ground point, also when unselected.
    """
    sel = list(selected)
    qmax = query_sim.max(axis=1) if query_sim.shape[1] else np.zeros(len(query_sim))
    amax = (
        ground_sim[:, sel].max(axis=1) if sel else np.zeros(ground_sim.shape[0])
    )
    return float(np.minimum(amax, qmax).sum())


def evaluate_flqmi(query_sim: np.ndarray, selected) -> float:
    """Bidirectional best-match value of an explicit candidate set."""
    sel = list(selected)
    if not sel or query_sim.shape[1] == 0:
        return 0.0
    per_query = query_sim[sel, :].max(axis=0).sum()
    per_candidate = query_sim[sel, :].max(axis=1).sum()
    return float(per_query + per_candidate)


class GcmiObjective:
    """Memoized pairwise-relevance objective (modular)."""

    kind = "gcmi"
    needs_ground = False

    def __init__(self, query_sim: np.ndarray):
        query_sim = _check_sim("query_sim", query_sim)
        if query_sim.shape[1] == 0:
            raise ValueError("gcmi requires a nonempty query set")
        self.n = query_sim.shape[0]
        self._rel = 2.0 * query_sim.sum(axis=1)
        self._value = 0.0
        self.selected: list = []
        self._in = np.zeros(self.n, dtype=bool)

    def value(self) -> float:
        return self._value

    def marginal_gains(self, candidates) -> np.ndarray:
        return self._rel[np.asarray(candidates, dtype=np.int64)].copy()

    def marginal_gain(self, j: int) -> float:
        return float(self._rel[j])

    def commit(self, j: int) -> None:
        if self._in[j]:
            raise ValueError(f"candidate {j} already committed")
        self._in[j] = True
        self.selected.append(int(j))
        self._value += float(self._rel[j])


class FlvmiObjective:
    """Memoized ground-coverage objective.

    Keeps, per ground point, the best similarity into the committed set
    so far; a candidate's gain is how much it lifts the query-capped
    coverage sum.
    """

    kind = "flvmi"
    needs_ground = True

    def __init__(self, query_sim: np.ndarray, ground_sim: np.ndarray):
        query_sim = _check_sim("query_sim", query_sim)
        ground_sim = _check_sim("ground_sim", ground_sim)
        if ground_sim.shape[0] != ground_sim.shape[1]:
            raise ValueError("ground_sim must be square")
        if ground_sim.shape[0] != query_sim.shape[0]:
            raise ValueError(
                f"ground_sim rows ({ground_sim.shape[0]}) must match "
                f"query_sim rows ({query_sim.shape[0]})"
            )
        self.n = query_sim.shape[0]
        self._ground = ground_sim
        self._qmax = (
            query_sim.max(axis=1) if query_sim.shape[1] else np.zeros(self.n)
        )
        self._cur = np.zeros(self.n)
        self.selected: list = []
        self._in = np.zeros(self.n, dtype=bool)

    def value(self) -> float:
        return float(np.minimum(self._cur, self._qmax).sum())

    def marginal_gains(self, candidates) -> np.ndarray:
        cands = np.asarray(candidates, dtype=np.int64)
        capped_now = np.minimum(self._cur, self._qmax)
        lifted = np.minimum(
            np.maximum(self._cur[:, None], self._ground[:, cands]),
            self._qmax[:, None],
        )
        return (lifted - capped_now[:, None]).sum(axis=0)

    def marginal_gain(self, j: int) -> float:
        return float(self.marginal_gains(np.array([j]))[0])

    def commit(self, j: int) -> None:
        if self._in[j]:
            raise ValueError(f"candidate {j} already committed")
        self._in[j] = True
        self.selected.append(int(j))
        np.maximum(self._cur, self._ground[:, j], out=self._cur)


class FlqmiObjective:
    """Memoized bidirectional best-match objective.

    Tracks the best committed similarity per query point; a candidate's
    gain is the coverage it adds on the query side plus its own best
    query similarity (a modular term).
    """

    kind = "flqmi"
    needs_ground = False

    def __init__(self, query_sim: np.ndarray):
        query_sim = _check_sim("query_sim", query_sim)
        self.n, self._m = query_sim.shape
        self._sim = query_sim
        self._amax = query_sim.max(axis=1) if self._m else np.zeros(self.n)
        self._qcur = np.zeros(self._m)
        self._amax_sum = 0.0
        self.selected: list = []
        self._in = np.zeros(self.n, dtype=bool)

    def value(self) -> float:
        return float(self._qcur.sum() + self._amax_sum)

    def marginal_gains(self, candidates) -> np.ndarray:
        cands = np.asarray(candidates, dtype=np.int64)
        if self._m == 0:
            return np.zeros(cands.shape[0])
        lift = (
            np.maximum(self._sim[cands, :], self._qcur[None, :]).sum(axis=1)
            - self._qcur.sum()
        )
        return lift + self._amax[cands]

    def marginal_gain(self, j: int) -> float:
        return float(self.marginal_gains(np.array([j]))[0])

    def commit(self, j: int) -> None:
        if self._in[j]:
            raise ValueError(f"candidate {j} already committed")
        self._in[j] = True
        self.selected.append(int(j))
        self._amax_sum += float(self._amax[j])
        np.maximum(self._qcur, self._sim[j, :], out=self._qcur)


def make_objective(kind: str, query_sim: np.ndarray, ground_sim=None):
    """Build one of the three objectives by its interface name."""
    if kind == "gcmi":
        return GcmiObjective(query_sim)
    if kind == "flvmi":
        if ground_sim is None:
            raise ValueError("flvmi needs a ground_sim kernel")
        return FlvmiObjective(query_sim, ground_sim)
    if kind == "flqmi":
        return FlqmiObjective(query_sim)
    raise ValueError(f"unknown objective kind {kind!r}; expected one of {KINDS}")
