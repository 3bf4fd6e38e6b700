"""Experiment orchestration: the full select-label-retrain loop.

Round 1 labels a uniform random batch. Each later round trains the
surrogate on everything labeled so far, runs the configured acquisition
strategy, and buys labels for its picks. After the last round the final
model is trained supervised and, when enabled, via pseudo-label
self-training on the remaining pool.

All randomness flows from the master seed through derive_seed, keyed by
round index and a phase name that never mentions the strategy, so two
strategies under the same master seed share the pool and the initial
random round but nothing else.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from dataclasses import dataclass

import numpy as np

from . import kernels as kernels_mod
from .config import ConfigError, ExperimentConfig
from .data import (
    PoolState,
    generate_pool,
    load_csv,
    make_pool_from_dataset,
    seed_round,
)
from .kernels import build_round_kernels
from .metrics import accuracy, imbalance_ratio
from .selftrain import pseudo_label_train
from .strategies import badge_select, entropy_select, random_select, smi_select
from .surrogate import ModelParams, train_surrogate

MASK64 = (1 << 64) - 1

CSV_COLUMNS = ("round", "strategy", "smi", "labeled_size", "ir", "test_acc",
               "per_class_counts")


class HarnessError(RuntimeError):
    """A module failure inside a run; the message names the failing round."""


def _fnv1a(text: str) -> int:
    digest = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        digest = ((digest ^ byte) * 0x100000001B3) & MASK64
    return digest


def _splitmix(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return (x ^ (x >> 31)) & MASK64


def derive_seed(master: int, round_index: int, phase: str) -> int:
    """Sub-seed for one (round, phase) cell under a master seed.

    Hashes the phase tag and round index together, then mixes with the
    master seed. Phase tags carry no strategy name, so any two runs that
    share a master seed draw identical data and round-1 randomness.
    """
    tag = _fnv1a(f"{phase}#{round_index}")
    return _splitmix((master & MASK64) ^ tag)


@dataclass(frozen=True)
class RoundRecord:
    """State of the labeled set after one round, plus model quality."""

    round_index: int
    strategy: str
    smi: str | None
    labeled_size: int
    ir: float | None
    test_acc: float
    per_class_counts: tuple


@dataclass(frozen=True)
class FinalRecord:
    supervised_test_acc: float
    ssl_test_acc: float | None
    final_ir: float | None
    pseudo_label_trace: tuple | None
    pseudo_label_passes: int | None
    greedy_variant: str | None


@dataclass(frozen=True)
class ExperimentReport:
    config: ExperimentConfig
    rounds: tuple
    final: FinalRecord
    wall_clock_seconds: dict
    ground_kernel_builds: int
    query_kernel_builds: int


def _build_pool(cfg: ExperimentConfig) -> PoolState:
    data_seed = derive_seed(cfg.seed, 0, "data")
    if cfg.source == "synthetic":
        return generate_pool(
            cfg.imbalance_spec(),
            dims=cfg.dims,
            cluster_spread=cfg.cluster_spread,
            rare_offset=cfg.rare_offset,
            rare_spread=cfg.rare_spread,
            test_per_class=cfg.test_per_class,
            seed=data_seed,
        )
    dataset = load_csv(cfg.csv_path)
    if dataset.num_classes != cfg.num_classes:
        raise ConfigError(
            f"data.num_classes is {cfg.num_classes} but {cfg.csv_path}"
            f" holds {dataset.num_classes} classes"
        )
    return make_pool_from_dataset(dataset, cfg.test_per_class, seed=data_seed)


def _labeled_labels(pool: PoolState) -> np.ndarray:
    return pool.dataset.labels[list(pool.labeled_idx)]


def _make_record(
    cfg: ExperimentConfig, round_index: int, pool: PoolState, params: ModelParams
) -> RoundRecord:
    labels = _labeled_labels(pool)
    counts = np.bincount(labels, minlength=pool.dataset.num_classes)
    test_rows = list(pool.test_idx)
    acc = accuracy(
        params, pool.dataset.features[test_rows], pool.dataset.labels[test_rows]
    )
    return RoundRecord(
        round_index=round_index,
        strategy=cfg.strategy,
        smi=cfg.smi_kind,
        labeled_size=len(pool.labeled_idx),
        ir=imbalance_ratio(labels, cfg.metric_spec()),
        test_acc=acc,
        per_class_counts=tuple(int(c) for c in counts),
    )


def _select_ids(cfg, view, params, round_kernels, batch, round_index):
    if cfg.strategy == "random":
        sub = derive_seed(cfg.seed, round_index, "random-select")
        return random_select(view, batch, sub).ids
    if cfg.strategy == "entropy":
        return entropy_select(view, params, batch).ids
    if cfg.strategy == "badge":
        sub = derive_seed(cfg.seed, round_index, "badge-select")
        return badge_select(view, params, batch, sub).ids
    greedy = cfg.greedy
    if greedy.variant == "stochastic":
        sub = derive_seed(cfg.seed, round_index, "stochastic-sample")
        greedy = dataclasses.replace(
            greedy, sample_seed=_splitmix(sub ^ (greedy.sample_seed & MASK64))
        )
    return smi_select(view, round_kernels, cfg.smi_kind, batch, greedy).ids


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Execute one configured experiment end to end.

    Bit-reproducible: the same config yields the same report apart from
    the wall-clock fields. Any failure inside a round is re-raised as a
    HarnessError naming that round.
    """
    wall = {"data": 0.0, "train": 0.0, "kernels": 0.0, "select": 0.0,
            "label": 0.0, "ssl": 0.0}
    ground_before = kernels_mod.BUILD_COUNTER.ground
    query_before = kernels_mod.BUILD_COUNTER.query
    batches = cfg.round_batches()

    start = time.perf_counter()
    pool = _build_pool(cfg)
    wall["data"] = time.perf_counter() - start

    try:
        start = time.perf_counter()
        pool = seed_round(pool, batches[0], derive_seed(cfg.seed, 1, "seed-round"))
        wall["select"] += time.perf_counter() - start
        start = time.perf_counter()
        params = train_surrogate(pool.view(), cfg.surrogate)
        wall["train"] += time.perf_counter() - start
        records = [_make_record(cfg, 1, pool, params)]
    except Exception as exc:
        raise HarnessError(f"round 1 failed: {exc}") from exc

    for round_index in range(2, cfg.num_rounds + 1):
        try:
            view = pool.view()
            round_kernels = None
            if cfg.smi_kind is not None:
                start = time.perf_counter()
                round_kernels = build_round_kernels(
                    view, params, with_ground=cfg.smi_kind == "flvmi"
                )
                wall["kernels"] += time.perf_counter() - start
            start = time.perf_counter()
            ids = _select_ids(
                cfg, view, params, round_kernels, batches[round_index - 1],
                round_index,
            )
            wall["select"] += time.perf_counter() - start
            start = time.perf_counter()
            pool = pool.label_batch(ids)
            wall["label"] += time.perf_counter() - start
            start = time.perf_counter()
            params = train_surrogate(pool.view(), cfg.surrogate)
            wall["train"] += time.perf_counter() - start
            records.append(_make_record(cfg, round_index, pool, params))
        except Exception as exc:
            raise HarnessError(f"round {round_index} failed: {exc}") from exc

    ssl_acc = None
    trace = None
    passes = None
    if cfg.ssl_enabled:
        try:
            start = time.perf_counter()
            ssl_result = pseudo_label_train(pool.view(), cfg.surrogate, cfg.ssl)
            wall["ssl"] = time.perf_counter() - start
        except Exception as exc:
            raise HarnessError(f"final self-training failed: {exc}") from exc
        test_rows = list(pool.test_idx)
        ssl_acc = accuracy(
            ssl_result.params,
            pool.dataset.features[test_rows],
            pool.dataset.labels[test_rows],
        )
        trace = ssl_result.newly_added
        passes = ssl_result.passes

    final = FinalRecord(
        supervised_test_acc=records[-1].test_acc,
        ssl_test_acc=ssl_acc,
        final_ir=records[-1].ir,
        pseudo_label_trace=trace,
        pseudo_label_passes=passes,
        greedy_variant=(
            cfg.greedy.resolve(cfg.smi_kind) if cfg.smi_kind is not None else None
        ),
    )
    return ExperimentReport(
        config=cfg,
        rounds=tuple(records),
        final=final,
        wall_clock_seconds=wall,
        ground_kernel_builds=kernels_mod.BUILD_COUNTER.ground - ground_before,
        query_kernel_builds=kernels_mod.BUILD_COUNTER.query - query_before,
    )


def _csv_number(value) -> str:
    if value is None:
        return "none"
    value = float(value)
    if np.isinf(value):
        return "inf"
    return repr(value)


def _csv_row(rec: RoundRecord) -> str:
    return ",".join(
        (
            str(rec.round_index),
            rec.strategy,
            rec.smi if rec.smi is not None else "none",
            str(rec.labeled_size),
            _csv_number(rec.ir),
            _csv_number(rec.test_acc),
            "|".join(str(c) for c in rec.per_class_counts),
        )
    )


def render_rounds_csv(rounds) -> str:
    """Round records as CSV text; identical records give identical bytes."""
    lines = [",".join(CSV_COLUMNS)]
    lines.extend(_csv_row(rec) for rec in rounds)
    return "\n".join(lines) + "\n"


def _json_number(value):
    if value is None:
        return None
    value = float(value)
    if np.isinf(value):
        return "inf"
    return value


def summary_payload(report: ExperimentReport) -> dict:
    """JSON-ready dict: config echo, per-round array, final block."""
    rounds = [
        {
            "round": rec.round_index,
            "strategy": rec.strategy,
            "smi": rec.smi,
            "labeled_size": rec.labeled_size,
            "ir": _json_number(rec.ir),
            "test_acc": _json_number(rec.test_acc),
            "per_class_counts": list(rec.per_class_counts),
        }
        for rec in report.rounds
    ]
    final = {
        "supervised_test_acc": _json_number(report.final.supervised_test_acc),
        "ssl_test_acc": _json_number(report.final.ssl_test_acc),
        "final_ir": _json_number(report.final.final_ir),
        "pseudo_label_trace": (
            list(report.final.pseudo_label_trace)
            if report.final.pseudo_label_trace is not None
            else None
        ),
        "pseudo_label_passes": report.final.pseudo_label_passes,
        "greedy_variant": report.final.greedy_variant,
        "ground_kernel_builds": report.ground_kernel_builds,
        "query_kernel_builds": report.query_kernel_builds,
    }
    return {
        "config": report.config.to_pairs(),
        "rounds": rounds,
        "final": final,
        "wall_clock_seconds": {
            k: float(v) for k, v in report.wall_clock_seconds.items()
        },
    }


def render_summary_json(report: ExperimentReport) -> str:
    return json.dumps(summary_payload(report), sort_keys=True, indent=2) + "\n"


def rounds_csv_from_payload(payload: dict) -> str:
    """Re-render the round CSV from a parsed summary JSON payload.

    Byte-identical to the CSV the original run wrote, because floats
    survive the JSON round trip exactly.
    """
    try:
        rounds = payload["rounds"]
        records = [
            RoundRecord(
                round_index=int(entry["round"]),
                strategy=entry["strategy"],
                smi=entry["smi"],
                labeled_size=int(entry["labeled_size"]),
                ir=(
                    float("inf")
                    if entry["ir"] == "inf"
                    else entry["ir"]
                ),
                test_acc=entry["test_acc"],
                per_class_counts=tuple(entry["per_class_counts"]),
            )
            for entry in rounds
        ]
    except (KeyError, TypeError) as exc:
        raise HarnessError(f"summary payload is malformed: {exc}") from exc
    return render_rounds_csv(records)


def write_report(report: ExperimentReport, out_dir) -> tuple:
    """Write rounds.csv and summary.json under out_dir; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "rounds.csv")
    json_path = os.path.join(out_dir, "summary.json")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(render_rounds_csv(report.rounds))
    with open(json_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(render_summary_json(report))
    return csv_path, json_path


@dataclass(frozen=True)
class StrategySummary:
    """Across-seed aggregate for one strategy in a comparison sweep."""

    strategy: str
    seeds: tuple
    mean_supervised_acc: float
    std_supervised_acc: float
    mean_ssl_acc: float | None
    std_ssl_acc: float | None
    mean_final_ir: float
    std_final_ir: float


@dataclass(frozen=True)
class ComparisonResult:
    summaries: tuple
    reports: dict  # (strategy, seed) -> ExperimentReport


def compare_strategies(cfg: ExperimentConfig, strategies, seeds) -> ComparisonResult:
    """Run every (strategy, seed) cell and aggregate mean and std per strategy.

    Cells share sub-seeding through the master seed, so all strategies
    under one seed start from the same pool and the same random round.
    """
    if not strategies:
        raise ConfigError("compare needs at least one strategy")
    if not seeds:
        raise ConfigError("compare needs at least one seed")
    reports = {}
    for strategy in strategies:
        for seed in seeds:
            cell = dataclasses.replace(cfg, strategy=strategy, seed=int(seed))
            reports[(strategy, int(seed))] = run_experiment(cell)
    summaries = []
    for strategy in strategies:
        cells = [reports[(strategy, int(seed))] for seed in seeds]
        sup = np.array([c.final.supervised_test_acc for c in cells])
        irs = np.array([c.final.final_ir for c in cells], dtype=np.float64)
        ssl_vals = [c.final.ssl_test_acc for c in cells]
        has_ssl = all(v is not None for v in ssl_vals)
        ssl_arr = np.array(ssl_vals, dtype=np.float64) if has_ssl else None
        summaries.append(
            StrategySummary(
                strategy=strategy,
                seeds=tuple(int(s) for s in seeds),
                mean_supervised_acc=float(sup.mean()),
                std_supervised_acc=float(sup.std()),
                mean_ssl_acc=float(ssl_arr.mean()) if has_ssl else None,
                std_ssl_acc=float(ssl_arr.std()) if has_ssl else None,
                mean_final_ir=float(irs.mean()),
                std_final_ir=float(irs.std()),
            )
        )
    return ComparisonResult(summaries=tuple(summaries), reports=reports)


COMPARISON_COLUMNS = (
    "strategy", "num_seeds", "mean_supervised_acc", "std_supervised_acc",
    "mean_ssl_acc", "std_ssl_acc", "mean_final_ir", "std_final_ir",
)


def render_comparison_csv(result: ComparisonResult) -> str:
    lines = [",".join(COMPARISON_COLUMNS)]
    for row in result.summaries:
        lines.append(
            ",".join(
                (
                    row.strategy,
                    str(len(row.seeds)),
                    _csv_number(row.mean_supervised_acc),
                    _csv_number(row.std_supervised_acc),
                    _csv_number(row.mean_ssl_acc),
                    _csv_number(row.std_ssl_acc),
                    _csv_number(row.mean_final_ir),
                    _csv_number(row.std_final_ir),
                )
            )
        )
    return "\n".join(lines) + "\n"


def render_comparison_text(result: ComparisonResult) -> str:
    """Human-oriented table: one strategy per line, mean +/- std columns."""
    lines = [
        f"{'strategy':<10} {'supervised_acc':>22} {'ssl_acc':>22} {'final_ir':>22}"
    ]
    for row in result.summaries:
        sup = f"{row.mean_supervised_acc:.4f} +/- {row.std_supervised_acc:.4f}"
        if row.mean_ssl_acc is None:
            ssl = "disabled"
        else:
            ssl = f"{row.mean_ssl_acc:.4f} +/- {row.std_ssl_acc:.4f}"
        ir = f"{row.mean_final_ir:.4f} +/- {row.std_final_ir:.4f}"
        lines.append(f"{row.strategy:<10} {sup:>22} {ssl:>22} {ir:>22}")
    return "\n".join(lines) + "\n"
