"""Greedy maximization of a monotone submodular objective.

Three interchangeable variants, all deterministic given their inputs:

* ``naive``      - recompute every candidate gain each step.
* ``lazy``       - priority queue over stale gains; submodularity means
  a re-evaluated top element whose gain still beats the queue is the
  true argmax. Picks the same elements as naive, including tie order.
* ``stochastic`` - evaluate a random sample of ceil((n/b) ln(1/eps))
  candidates per step, trading the (1 - 1/e) guarantee for
  (1 - 1/e - eps) at a fraction of the evaluations.

A fourth name, ``auto``, resolves per objective: naive for the modular
pairwise-relevance objective (lazy buys nothing when gains never
change), lazy for the two coverage objectives.

Ties break toward the lowest candidate id everywhere.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

VARIANTS = ("naive", "lazy", "stochastic", "auto")


@dataclass(frozen=True)
class GreedyConfig:
    variant: str = "auto"
    epsilon: float = 0.01
    sample_seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(
                f"unknown variant {self.variant!r}; expected one of {VARIANTS}"
            )
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must be in (0, 1)")

    def resolve(self, objective_kind: str) -> str:
        if self.variant != "auto":
            return self.variant
        return "naive" if objective_kind == "gcmi" else "lazy"


@dataclass(frozen=True)
class GreedyResult:
    selected: tuple
    gains: tuple
    evaluations: int

    @property
    def value(self) -> float:
        return float(sum(self.gains))


def _guard(gain: float, j: int) -> None:
    if gain < -1e-9:
        raise RuntimeError(
            f"candidate {j} has marginal gain {gain}; the objective is not monotone"
        )


def _naive(objective, candidates, budget):
    remaining = list(candidates)
    picked, gains, evals = [], [], 0
    for _ in range(budget):
        cand = np.array(remaining, dtype=np.int64)
        g = objective.marginal_gains(cand)
        evals += len(remaining)
        best = int(np.argmax(g))  # argmax keeps the first (lowest id) on ties
        j = remaining[best]
        _guard(float(g[best]), j)
        picked.append(j)
        gains.append(float(g[best]))
        objective.commit(j)
        remaining.pop(best)
    return picked, gains, evals


def _lazy(objective, candidates, budget):
    # Heap entries are (-gain, candidate, stamp); a stamp older than the
    # current step means the gain may be stale and must be refreshed.
    cand = np.array(candidates, dtype=np.int64)
    gains0 = objective.marginal_gains(cand)
    evals = len(cand)
    heap = [(-float(g), int(j), 0) for g, j in zip(gains0, cand)]
    heapq.heapify(heap)
    picked, gains = [], []
    for step in range(1, budget + 1):
        while True:
            neg_gain, j, stamp = heapq.heappop(heap)
            if stamp == step:
                _guard(-neg_gain, j)
                picked.append(j)
                gains.append(-neg_gain)
                objective.commit(j)
                break
            fresh = objective.marginal_gain(j)
            evals += 1
            heapq.heappush(heap, (-fresh, j, step))
    return picked, gains, evals


def _stochastic(objective, candidates, budget, epsilon, seed):
    rng = np.random.default_rng(seed)
    remaining = list(candidates)
    n = len(remaining)
    sample_size = math.ceil((n / budget) * math.log(1.0 / epsilon))
    picked, gains, evals = [], [], 0
    for _ in range(budget):
        take = min(sample_size, len(remaining))
        rows = rng.choice(len(remaining), size=take, replace=False)
        rows.sort()  # ascending candidate ids, so argmax ties go low
        sample = [remaining[r] for r in rows]
        g = objective.marginal_gains(np.array(sample, dtype=np.int64))
        evals += take
        best = int(np.argmax(g))
        j = sample[best]
        _guard(float(g[best]), j)
        picked.append(j)
        gains.append(float(g[best]))
        objective.commit(j)
        remaining.remove(j)
    return picked, gains, evals


def maximize(
    objective, candidates, budget: int, config: GreedyConfig = GreedyConfig()
) -> GreedyResult:
    """Greedily pick ``budget`` elements of ``candidates`` for ``objective``.

    The objective is mutated (commits happen in place). Candidates must
    be unique, uncommitted positions known to the objective.
    """
    cands = sorted(int(j) for j in candidates)
    if len(set(cands)) != len(cands):
        raise ValueError("candidates contain duplicates")
    if budget < 0:
        raise ValueError("budget must be >= 0")
    if budget > len(cands):
        raise ValueError(f"budget {budget} exceeds {len(cands)} candidates")
    if objective.selected:
        raise ValueError("objective already holds commits; pass a fresh one")
    if budget == 0:
        return GreedyResult(selected=(), gains=(), evaluations=0)
    variant = config.resolve(getattr(objective, "kind", ""))
    if variant == "naive":
        picked, gains, evals = _naive(objective, cands, budget)
    elif variant == "lazy":
        picked, gains, evals = _lazy(objective, cands, budget)
    else:
        picked, gains, evals = _stochastic(
            objective, cands, budget, config.epsilon, config.sample_seed
        )
    return GreedyResult(selected=tuple(picked), gains=tuple(gains), evaluations=evals)
