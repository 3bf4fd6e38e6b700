"""End-to-end checks of the package's headline guarantees.

Each test exercises one externally visible promise: exact incremental
bookkeeping of the selection objectives, the monotone-submodular
structure the greedy rules rely on, greedy approximation quality,
analytic gradient correctness, the class-balance and accuracy gains of
the balanced strategies on a skewed pool, exact imbalance-ratio
arithmetic, kernel-request and time-scaling behavior, and
bit-reproducible reruns.
"""

import itertools
import math
import time

import numpy as np
import pytest

from balsel.config import resolve_config
from balsel.harness import render_rounds_csv, run_experiment, write_report
from balsel.kernels import cosine_kernel
from balsel.maximizer import GreedyConfig, maximize
from balsel.metrics import MetricSpec, imbalance_ratio
from balsel.smi import (
    KINDS,
    evaluate_flqmi,
    evaluate_flvmi,
    evaluate_gcmi,
    make_objective,
)
from balsel.surrogate import (
    ModelParams,
    gradient_embedding,
    loss,
    loss_gradient,
    predict_proba,
)

MASTERS = (23, 31, 32, 46, 51)
ALL_STRATEGIES = ("random", "entropy", "badge", "gcmi", "flvmi", "flqmi")
SMI_STRATEGIES = ("gcmi", "flvmi", "flqmi")


@pytest.fixture(scope="module")
def strategy_grid():
    """Every strategy on the default skewed pool, across five masters."""
    start = time.perf_counter()
    reports = {}
    for strategy in ALL_STRATEGIES:
        for master in MASTERS:
            cfg = resolve_config(
                overrides={"strategy": strategy, "seed": str(master)}
            )
            reports[(strategy, master)] = run_experiment(cfg)
    return reports, time.perf_counter() - start


def random_instance(rng, kind, n=None, num_queries=None):
    n = int(n if n is not None else rng.integers(2, 11))
    num_queries = int(
        num_queries if num_queries is not None else rng.integers(1, 5)
    )
    query_sim = rng.random((n, num_queries))
    ground_sim = None
    if kind == "flvmi":
        half = rng.random((n, n))
        ground_sim = (half + half.T) / 2.0
        np.fill_diagonal(ground_sim, 1.0)
    return query_sim, ground_sim


def evaluate(kind, query_sim, ground_sim, selected):
    if kind == "gcmi":
        return evaluate_gcmi(query_sim, selected)
    if kind == "flvmi":
        return evaluate_flvmi(ground_sim, query_sim, selected)
    return evaluate_flqmi(query_sim, selected)


# Pure-python restatements of the three objectives, kept deliberately
# independent of the vectorized incremental implementations.
def slow_value(kind, query_sim, ground_sim, selected):
    qs = query_sim.tolist()
    num_queries = len(qs[0])
    if kind == "gcmi":
        return 2.0 * sum(qs[i][k] for i in selected for k in range(num_queries))
    if kind == "flvmi":
        gs = ground_sim.tolist()
        total = 0.0
        for i in range(len(gs)):
            best_sel = max((gs[i][j] for j in selected), default=0.0)
            best_query = max(qs[i])
            total += min(best_sel, best_query)
        return total
    covered = sum(
        max((qs[i][k] for i in selected), default=0.0)
        for k in range(num_queries)
    )
    informative = sum(max(qs[i]) for i in selected)
    return covered + informative


def test_memoized_values_match_independent_recomputation():
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    for kind in KINDS:
        for _ in range(200):
            query_sim, ground_sim = random_instance(rng, kind)
            n = query_sim.shape[0]
            obj = make_objective(kind, query_sim, ground_sim)
            order = rng.permutation(n)[: rng.integers(1, n + 1)]
            selected = []
            for j in order:
                remaining = [c for c in range(n) if c not in selected]
                base = slow_value(kind, query_sim, ground_sim, selected)
                slow_gains = [
                    slow_value(kind, query_sim, ground_sim, selected + [c]) - base
                    for c in remaining
                ]
                np.testing.assert_allclose(
                    obj.marginal_gains(remaining), slow_gains, rtol=0, atol=1e-9
                )
                spot = remaining[rng.integers(len(remaining))]
                np.testing.assert_allclose(
                    obj.marginal_gain(spot),
                    slow_value(kind, query_sim, ground_sim, selected + [spot])
                    - base,
                    rtol=0,
                    atol=1e-9,
                )
                obj.commit(int(j))
                selected.append(int(j))
                np.testing.assert_allclose(
                    obj.value(),
                    slow_value(kind, query_sim, ground_sim, selected),
                    rtol=0,
                    atol=1e-9,
                )
    assert time.perf_counter() - start < 10.0


def subset_table(kind, query_sim, ground_sim):
    n = query_sim.shape[0]
    return [
        evaluate(
            kind, query_sim, ground_sim,
            [i for i in range(n) if (mask >> i) & 1],
        )
        for mask in range(1 << n)
    ]


def test_monotonicity_and_submodularity_hold_exhaustively():
    start = time.perf_counter()
    rng = np.random.default_rng(202)

    for kind in KINDS:
        # Monotonicity plus the pairwise exchange form of submodularity
        # (equivalent to the nested-subset form) over every state at n=10.
        query_sim, ground_sim = random_instance(rng, kind, n=10, num_queries=3)
        n = 10
        table = subset_table(kind, query_sim, ground_sim)
        for mask in range(1 << n):
            outside = [j for j in range(n) if not (mask >> j) & 1]
            for j in outside:
                assert table[mask | (1 << j)] - table[mask] >= -1e-12
            for j, k in itertools.combinations(outside, 2):
                gain_alone = table[mask | (1 << j)] - table[mask]
                gain_after = (
                    table[mask | (1 << j) | (1 << k)] - table[mask | (1 << k)]
                )
                assert gain_alone >= gain_after - 1e-12

        # Direct nested-subset form at n=6: every A subset of B, j outside B.
        query_sim, ground_sim = random_instance(rng, kind, n=6, num_queries=2)
        table = subset_table(kind, query_sim, ground_sim)
        for b_mask in range(1 << 6):
            inside = [i for i in range(6) if (b_mask >> i) & 1]
            outside = [j for j in range(6) if not (b_mask >> j) & 1]
            a_mask = b_mask
            while True:
                for j in outside:
                    bit = 1 << j
                    assert (
                        table[a_mask | bit] - table[a_mask]
                        >= table[b_mask | bit] - table[b_mask] - 1e-12
                    )
                if a_mask == 0:
                    break
                a_mask = (a_mask - 1) & b_mask

    # The query-coverage objective equals a facility-location difference
    # f(A) + f(Q) - f(A u Q) over the joint set A u Q, for any mixing
    # kernel with unit diagonals and off-diagonals at most 1.
    rng_joint = np.random.default_rng(303)
    for n, num_queries in ((4, 2), (6, 3), (8, 2)):
        query_sim = rng_joint.random((n, num_queries))
        joint = rng_joint.random((n + num_queries, n + num_queries))
        joint = (joint + joint.T) / 2.0
        joint[:n, n:] = query_sim
        joint[n:, :n] = query_sim.T
        np.fill_diagonal(joint, 1.0)
        query_rows = list(range(n, n + num_queries))

        def facility(members, facilities):
            if not facilities:
                return 0.0
            block = joint[np.ix_(members, facilities)]
            return float(block.max(axis=1).sum())

        for mask in range(1 << n):
            chosen = [i for i in range(n) if (mask >> i) & 1]
            members = chosen + query_rows
            identity = (
                facility(members, chosen)
                + facility(members, query_rows)
                - facility(members, chosen + query_rows)
            )
            np.testing.assert_allclose(
                evaluate_flqmi(query_sim, chosen), identity, rtol=0, atol=1e-9
            )

    # Long commit chains must not accumulate drift against a fresh
    # from-scratch evaluation.
    rng_long = np.random.default_rng(404)
    for kind in KINDS:
        query_sim, ground_sim = random_instance(
            rng_long, kind, n=150, num_queries=5
        )
        obj = make_objective(kind, query_sim, ground_sim)
        order = rng_long.permutation(150)[:100]
        for j in order:
            obj.commit(int(j))
        fresh = evaluate(kind, query_sim, ground_sim, [int(j) for j in order])
        assert abs(obj.value() - fresh) <= 1e-9 * (1.0 + abs(fresh))

    assert time.perf_counter() - start < 30.0


def test_greedy_matches_approximation_guarantees():
    start = time.perf_counter()
    rng = np.random.default_rng(505)
    guarantee = 1.0 - 1.0 / math.e
    for index in range(50):
        kind = KINDS[index % 3]
        n = int(rng.integers(6, 13))
        budget = int(rng.integers(1, 5))
        query_sim, ground_sim = random_instance(rng, kind, n=n)

        opt = max(
            evaluate(kind, query_sim, ground_sim, list(combo))
            for combo in itertools.combinations(range(n), budget)
        )

        naive = maximize(
            make_objective(kind, query_sim, ground_sim),
            range(n),
            budget,
            GreedyConfig(variant="naive"),
        )
        assert naive.value >= guarantee * opt - 1e-12

        lazy = maximize(
            make_objective(kind, query_sim, ground_sim),
            range(n),
            budget,
            GreedyConfig(variant="lazy"),
        )
        assert lazy.selected == naive.selected

        values = [
            maximize(
                make_objective(kind, query_sim, ground_sim),
                range(n),
                budget,
                GreedyConfig(
                    variant="stochastic", epsilon=0.01, sample_seed=seed
                ),
            ).value
            for seed in range(20)
        ]
        assert np.mean(values) >= (guarantee - 0.05) * opt
    assert time.perf_counter() - start < 120.0


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(606)
    num_classes, dim, n = 3, 4, 12
    step = 1e-5
    for _ in range(10):
        features = rng.standard_normal((n, dim))
        labels = rng.integers(0, num_classes, size=n)
        params = ModelParams(
            weights=0.5 * rng.standard_normal((num_classes, dim)),
            bias=0.5 * rng.standard_normal(num_classes),
        )
        l2 = 1e-3

        grad_w, grad_b = loss_gradient(params, features, labels, l2)
        fd_w = np.zeros_like(grad_w)
        for idx in np.ndindex(*grad_w.shape):
            up = params.weights.copy()
            down = params.weights.copy()
            up[idx] += step
            down[idx] -= step
            fd_w[idx] = (
                loss(ModelParams(up, params.bias), features, labels, l2)
                - loss(ModelParams(down, params.bias), features, labels, l2)
            ) / (2 * step)
        np.testing.assert_allclose(grad_w, fd_w, rtol=1e-5, atol=1e-8)

        fd_b = np.zeros_like(grad_b)
        for idx in range(num_classes):
            up = params.bias.copy()
            down = params.bias.copy()
            up[idx] += step
            down[idx] -= step
            fd_b[idx] = (
                loss(ModelParams(params.weights, up), features, labels, l2)
                - loss(ModelParams(params.weights, down), features, labels, l2)
            ) / (2 * step)
        np.testing.assert_allclose(grad_b, fd_b, rtol=1e-5, atol=1e-8)

    # Per-point embedding rows differentiate each point's own negative
    # log likelihood with respect to the weights, without the l2 term.
    for _ in range(2):
        features = rng.standard_normal((6, dim))
        labels = rng.integers(0, num_classes, size=6)
        params = ModelParams(
            weights=0.5 * rng.standard_normal((num_classes, dim)),
            bias=0.5 * rng.standard_normal(num_classes),
        )
        rows = gradient_embedding(params, features, labels)

        def point_nll(weights, i):
            probs = predict_proba(
                ModelParams(weights, params.bias), features[i : i + 1]
            )
            return -math.log(probs[0, labels[i]])

        for i in range(6):
            fd_row = np.zeros(num_classes * dim)
            for flat, idx in enumerate(np.ndindex(num_classes, dim)):
                up = params.weights.copy()
                down = params.weights.copy()
                up[idx] += step
                down[idx] -= step
                fd_row[flat] = (point_nll(up, i) - point_nll(down, i)) / (
                    2 * step
                )
            np.testing.assert_allclose(rows[i], fd_row, rtol=1e-5, atol=1e-8)


def test_balanced_selection_beats_baselines_on_imbalance(strategy_grid):
    reports, elapsed = strategy_grid
    random_irs = np.array(
        [reports[("random", m)].final.final_ir for m in MASTERS],
        dtype=np.float64,
    )
    assert np.all(np.isfinite(random_irs))
    random_mean = float(random_irs.mean())
    assert 10.0 <= random_mean <= 30.0

    for kind in SMI_STRATEGIES:
        kind_irs = np.array(
            [reports[(kind, m)].final.final_ir for m in MASTERS],
            dtype=np.float64,
        )
        # At least five times more balanced than uniform sampling.
        assert np.all(kind_irs <= random_mean / 5.0), kind
        for baseline in ("entropy", "badge"):
            base_irs = np.array(
                [reports[(baseline, m)].final.final_ir for m in MASTERS],
                dtype=np.float64,
            )
            wins = int(np.sum(kind_irs < base_irs))
            assert wins >= 4, (kind, baseline, kind_irs, base_irs)
    assert elapsed < 900.0


def test_selection_quality_carries_through_self_training(strategy_grid):
    reports, elapsed = strategy_grid
    random_sup = np.mean(
        [reports[("random", m)].final.supervised_test_acc for m in MASTERS]
    )
    random_ssl = np.mean(
        [reports[("random", m)].final.ssl_test_acc for m in MASTERS]
    )
    for kind in SMI_STRATEGIES:
        kind_sup = np.mean(
            [reports[(kind, m)].final.supervised_test_acc for m in MASTERS]
        )
        kind_ssl = np.mean(
            [reports[(kind, m)].final.ssl_test_acc for m in MASTERS]
        )
        assert kind_sup - random_sup > 0.0, kind
        assert kind_ssl - random_ssl > 0.0, kind
    assert elapsed < 1200.0


def test_imbalance_ratio_exact_values():
    spec = MetricSpec(frozenset({0, 1}), frozenset({2, 3, 4}))
    balanced = [0] * 5 + [1] * 5 + [2] * 5 + [3] * 5 + [4] * 5
    assert imbalance_ratio(balanced, spec) == 1.0

    skew = MetricSpec(frozenset({0}), frozenset({1}))
    assert imbalance_ratio([0] * 2 + [1] * 12, skew) == 6.0
    assert imbalance_ratio([1] * 7, skew) == float("inf")
    assert imbalance_ratio([], skew) is None

    pool_cfg = resolve_config()
    pool_labels = np.concatenate(
        [np.repeat(c, pool_cfg.rare_count) for c in pool_cfg.rare_classes]
        + [
            np.repeat(c, pool_cfg.frequent_count)
            for c in pool_cfg.frequent_classes
        ]
    )
    assert imbalance_ratio(pool_labels, pool_cfg.metric_spec()) == 20.0


def test_kernel_requests_and_time_scaling(strategy_grid):
    reports, _ = strategy_grid
    for master in MASTERS:
        flvmi = reports[("flvmi", master)]
        assert flvmi.ground_kernel_builds == flvmi.config.num_rounds - 1 == 9
        assert flvmi.query_kernel_builds == 9
        for kind in ("gcmi", "flqmi"):
            assert reports[(kind, master)].ground_kernel_builds == 0
            assert reports[(kind, master)].query_kernel_builds == 9

    def best_of(fn, repeats):
        best = float("inf")
        for _ in range(repeats):
            begin = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - begin)
        return best

    sizes = (500, 1000, 2000)
    rng = np.random.default_rng(707)
    query_sims = {n: rng.random((n, 16)) for n in sizes}
    embeddings = {n: rng.standard_normal((n, 128)) for n in sizes}

    def select(n):
        maximize(
            make_objective("flqmi", query_sims[n]), range(n), 32, GreedyConfig()
        )

    # Warm both phases at the largest size before timing anything.
    select(sizes[-1])
    cosine_kernel(embeddings[sizes[-1]], embeddings[sizes[-1]])

    select_times = [best_of(lambda n=n: select(n), repeats=7) for n in sizes]
    kernel_times = [
        best_of(lambda n=n: cosine_kernel(embeddings[n], embeddings[n]), repeats=9)
        for n in sizes
    ]
    select_slope = np.polyfit(np.log(sizes), np.log(select_times), 1)[0]
    kernel_slope = np.polyfit(np.log(sizes), np.log(kernel_times), 1)[0]
    assert select_slope < 1.5, (select_slope, select_times)
    assert kernel_slope >= 1.8, (kernel_slope, kernel_times)


def test_reruns_are_byte_identical(tmp_path):
    cfg = resolve_config()
    begin = time.perf_counter()
    first = run_experiment(cfg)
    first_seconds = time.perf_counter() - begin
    second = run_experiment(cfg)
    assert first_seconds < 60.0
    assert render_rounds_csv(first.rounds) == render_rounds_csv(second.rounds)

    first_csv, _ = write_report(first, tmp_path / "first")
    second_csv, _ = write_report(second, tmp_path / "second")
    with open(first_csv, "rb") as fh:
        first_bytes = fh.read()
    with open(second_csv, "rb") as fh:
        second_bytes = fh.read()
    assert first_bytes == second_bytes
