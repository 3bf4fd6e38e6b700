"""Command line entry points.

Subcommands: generate (synthetic dataset to CSV), run (one experiment),
compare (strategy sweep), report (summary JSON back to round CSV).
Exit codes: 0 success, 2 bad configuration or arguments, 3 runtime
failure inside an experiment.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import ConfigError, load_config, render_config, resolve_config
from .data import generate_synthetic, save_csv
from .harness import (
    compare_strategies,
    derive_seed,
    render_comparison_csv,
    render_comparison_text,
    rounds_csv_from_payload,
    run_experiment,
    write_report,
)


def _parse_overrides(pairs) -> dict:
    overrides = {}
    for item in pairs or []:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = value.strip()
    return overrides


def _collect_config(args):
    overrides = _parse_overrides(args.set)
    if getattr(args, "strategy", None):
        overrides["strategy"] = args.strategy
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = str(args.seed)
    if getattr(args, "output_dir", None):
        overrides["output_dir"] = args.output_dir
    if args.config:
        return load_config(args.config, overrides, args.profile)
    return resolve_config({}, overrides, args.profile)


def _add_config_arguments(parser, with_strategy=True):
    parser.add_argument("--config", help="path to a key = value config file")
    parser.add_argument(
        "--profile", help="named config bundle (pathlike or organlike)"
    )
    parser.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override one config key; repeatable",
    )
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--output-dir", help="output directory override")
    if with_strategy:
        parser.add_argument("--strategy", help="acquisition strategy override")


def _cmd_generate(args) -> int:
    cfg = _collect_config(args)
    dataset = generate_synthetic(
        cfg.imbalance_spec(),
        dims=cfg.dims,
        cluster_spread=cfg.cluster_spread,
        rare_offset=cfg.rare_offset,
        rare_spread=cfg.rare_spread,
        seed=derive_seed(cfg.seed, 0, "data"),
    )
    save_csv(dataset, args.out)
    print(f"wrote {dataset.n} rows x {dataset.dim} features to {args.out}")
    return 0


def _cmd_run(args) -> int:
    cfg = _collect_config(args)
    report = run_experiment(cfg)
    csv_path, json_path = write_report(report, cfg.output_dir)
    final = report.final
    ssl = "disabled" if final.ssl_test_acc is None else f"{final.ssl_test_acc:.4f}"
    ir = final.final_ir
    ir_text = "inf" if ir is not None and ir == float("inf") else f"{ir:.4f}"
    print(
        f"{cfg.strategy}: supervised_acc={final.supervised_test_acc:.4f}"
        f" ssl_acc={ssl} final_ir={ir_text}"
    )
    print(f"wrote {csv_path} and {json_path}")
    return 0


def _cmd_compare(args) -> int:
    cfg = _collect_config(args)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    seeds = []
    for part in args.seeds.split(","):
        part = part.strip()
        if part:
            try:
                seeds.append(int(part))
            except ValueError:
                raise ConfigError(f"--seeds expects integers, got {part!r}") from None
    result = compare_strategies(cfg, strategies, seeds)
    os.makedirs(cfg.output_dir, exist_ok=True)
    out_path = os.path.join(cfg.output_dir, "comparison.csv")
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(render_comparison_csv(result))
    sys.stdout.write(render_comparison_text(result))
    print(f"wrote {out_path}")
    return 0


def _cmd_report(args) -> int:
    with open(args.summary, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    text = rounds_csv_from_payload(payload)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_show_config(args) -> int:
    cfg = _collect_config(args)
    sys.stdout.write(render_config(cfg))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="balsel",
        description="Class-balanced active selection experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic dataset to CSV")
    _add_config_arguments(gen, with_strategy=False)
    gen.add_argument("--out", required=True, help="destination CSV path")
    gen.set_defaults(func=_cmd_generate)

    run = sub.add_parser("run", help="run one experiment")
    _add_config_arguments(run)
    run.set_defaults(func=_cmd_run)

    cmp_parser = sub.add_parser("compare", help="sweep strategies across seeds")
    _add_config_arguments(cmp_parser, with_strategy=False)
    cmp_parser.add_argument(
        "--strategies",
        default="random,entropy,badge,gcmi,flvmi,flqmi",
        help="comma-separated strategy names",
    )
    cmp_parser.add_argument(
        "--seeds", default="0", help="comma-separated master seeds"
    )
    cmp_parser.set_defaults(func=_cmd_compare)

    rep = sub.add_parser("report", help="re-render a summary JSON to round CSV")
    rep.add_argument("--summary", required=True, help="path to summary.json")
    rep.add_argument("--out", help="destination CSV path (default stdout)")
    rep.set_defaults(func=_cmd_report)

    show = sub.add_parser("show-config", help="print the resolved config")
    _add_config_arguments(show)
    show.set_defaults(func=_cmd_show_config)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
