"""Command-line harness.

Subcommands:
  pretrain  train the source model, emit checkpoint + stats files
  stats     recompute source statistics from a checkpoint
  adapt     run a single adaptation method over the shifted stream
  compare   run every configured method and write the comparison report
  report    regenerate summary/plot-data files from RunRecord CSVs

Exit codes: 0 ok, 1 config error, 2 numerical failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import adapt as adapt_mod
from . import data, experiment, network, stats as stats_mod
from .config import ExperimentConfig
from .errors import (
    ConfigInvalid,
    NonFiniteLoss,
    NotPositiveDefinite,
    StatsIoError,
    TrainingDiverged,
    TtaError,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3


def _checkpoint_and_stats_paths(out_dir: str) -> tuple[str, str]:
    return os.path.join(out_dir, "checkpoint.npz"), os.path.join(out_dir, "stats.bin")


def cmd_pretrain(args) -> int:
    cfg = ExperimentConfig.from_json_file(args.config)
    out_dir = args.out_dir or cfg.output_dir
    result = experiment.pretrain_source(cfg)
    os.makedirs(out_dir, exist_ok=True)
    ckpt_path, stats_path = _checkpoint_and_stats_paths(out_dir)
    network.save_checkpoint(result.model, ckpt_path)
    stats_mod.save_stats(result.stats, stats_path)
    print(f"checkpoint: {ckpt_path}")
    print(f"stats: {stats_path}")
    print(f"source holdout accuracy: {result.holdout_accuracy:.4f}")
    return EXIT_OK


def cmd_stats(args) -> int:
    cfg = ExperimentConfig.from_json_file(args.config)
    model = network.load_checkpoint(args.checkpoint)
    dataset = data.generate_dataset(cfg.synthetic, shift=None)
    stats = stats_mod.estimate_source_stats(
        model,
        dataset.train_x,
        dataset.train_y,
        mode=cfg.pretrain.cov_mode,
        eps_scale=cfg.pretrain.eps_scale,
    )
    stats_mod.save_stats(stats, args.out)
    print(f"stats: {args.out} ({stats.n_classes} classes, d={stats.feature_dim})")
    for w in stats.warnings:
        print(f"warning: {w}")
    return EXIT_OK


def cmd_adapt(args) -> int:
    cfg = ExperimentConfig.from_json_file(args.config)
    matching = [m for m in cfg.methods if m.run_name == args.method]
    if not matching:
        raise ConfigInvalid(
            f"method {args.method!r} not in config "
            f"(available: {[m.run_name for m in cfg.methods]})"
        )
    mcfg = matching[0]
    model = network.load_checkpoint(args.checkpoint)
    stats = stats_mod.load_stats(args.stats)
    shifted = data.generate_dataset(cfg.synthetic, shift=cfg.shift)
    batches = data.batch_stream(shifted.target_x, shifted.target_y, mcfg.batch_size)
    _, record = adapt_mod.adapt_stream(model, stats, batches, mcfg)
    out_dir = args.out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"run_{mcfg.run_name}.csv")
    adapt_mod.write_run_record(
        record, csv_path, os.path.join(out_dir, f"run_{mcfg.run_name}.json")
    )
    acc = record.accuracies()
    print(f"run record: {csv_path}")
    print(f"mean accuracy: {np.mean(acc):.4f}")
    print(f"final-quarter accuracy: {experiment.final_quarter_mean(acc):.4f}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = ExperimentConfig.from_json_file(args.config)
    out_dir = args.out_dir or cfg.output_dir
    result = experiment.run_experiment(cfg, out_dir=out_dir)
    print(f"outputs: {out_dir}")
    with open(os.path.join(out_dir, "summary.txt")) as fh:
        print(fh.read(), end="")
    return EXIT_OK


def cmd_report(args) -> int:
    summaries = experiment.rebuild_report(args.run_dir)
    with open(os.path.join(args.run_dir, "summary.txt")) as fh:
        print(fh.read(), end="")
    return EXIT_OK if summaries else EXIT_CONFIG


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tta-align",
        description="Class-aware feature alignment test-time adaptation benchmark",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="train source model, emit checkpoint + stats")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("stats", help="recompute source statistics from a checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("adapt", help="run one adaptation method")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--stats", required=True)
    p.add_argument("--method", required=True)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("compare", help="run all configured methods and report")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="rebuild summary files from run records")
    p.add_argument("--run-dir", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonFiniteLoss, NotPositiveDefinite, TrainingDiverged) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (StatsIoError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TtaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
