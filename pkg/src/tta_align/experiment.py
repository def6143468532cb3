"""Experiment drivers: source pre-training and method comparisons.

Every method in one experiment consumes the identical target stream; each
method adapts its own copy of the pretrained model.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import adapt, data, losses, network, stats as stats_mod
from .adapt import RunRecord, TtaConfig, adapt_stream
from .config import ExperimentConfig
from .errors import ConfigInvalid, NonFiniteLoss, TrainingDiverged
from .network import AdaptiveModel, StatMode
from .stats import SourceStats


@dataclass
class PretrainResult:
    model: AdaptiveModel
    stats: SourceStats
    dataset: data.Dataset
    holdout_accuracy: float
    loss_history: list[float] = field(default_factory=list)


def evaluate_accuracy(model: AdaptiveModel, x, y) -> float:
    preds = network.predict(model, x, StatMode.RUNNING_EVAL)
    return float(np.mean(preds == np.asarray(y)))


def pretrain_source(cfg: ExperimentConfig, dataset: data.Dataset | None = None) -> PretrainResult:
    """Train the desk model on source data and fit the source Gaussians."""
    cfg.synthetic.validate()
    cfg.model.validate()
    cfg.pretrain.validate()
    if dataset is None:
        dataset = data.generate_dataset(cfg.synthetic, shift=None)

    rng = np.random.default_rng(cfg.model.seed)
    model = network.init_model(
        cfg.synthetic.input_dim,
        [int(w) for w in cfg.model.hidden_dims],
        cfg.synthetic.n_classes,
        rng,
        bn_momentum=cfg.model.bn_momentum,
    )
    params = model.named_parameters()
    all_names = list(params)
    adam = adapt.AdamState()
    shuffle_rng = np.random.default_rng(cfg.pretrain.seed)
    history: list[float] = []

    n = dataset.train_x.shape[0]
    bs = cfg.pretrain.batch_size
    for _ in range(cfg.pretrain.epochs):
        order = shuffle_rng.permutation(n)
        for start in range(0, n - bs + 1, bs):
            idx = order[start : start + bs]
            xb = dataset.train_x[idx]
            yb = dataset.train_y[idx]
            spec = losses.SupervisedCE(labels=yb)
            try:
                loss_value, grads = network.loss_and_grad_named(
                    model, xb, StatMode.TRAIN_UPDATE, spec, all_names
                )
            except NonFiniteLoss as exc:
                raise TrainingDiverged(f"pretraining diverged: {exc}") from exc
            history.append(loss_value)
            adapt.adam_step(params, grads, adam, cfg.pretrain.learning_rate)

    holdout = evaluate_accuracy(model, dataset.test_x, dataset.test_y)
    source_stats = stats_mod.estimate_source_stats(
        model,
        dataset.train_x,
        dataset.train_y,
        mode=cfg.pretrain.cov_mode,
        eps_scale=cfg.pretrain.eps_scale,
    )
    return PretrainResult(model, source_stats, dataset, holdout, history)


# -- comparison runs -----------------------------------------------------------


@dataclass
class MethodSummary:
    name: str
    mean_accuracy: float
    final_quarter_accuracy: float
    final_mean_intra: float
    final_mean_inter: float


@dataclass
class ExperimentResult:
    records: dict[str, RunRecord]
    summaries: list[MethodSummary]
    source_holdout_accuracy: float


def final_quarter_mean(values: np.ndarray) -> float:
    n = len(values)
    start = n - max(1, n // 4)
    return float(np.mean(values[start:]))


def summarize_record(name: str, record: RunRecord) -> MethodSummary:
    acc = record.accuracies()
    return MethodSummary(
        name=name,
        mean_accuracy=float(np.mean(acc)),
        final_quarter_accuracy=final_quarter_mean(acc),
        final_mean_intra=record.rows[-1].mean_intra,
        final_mean_inter=record.rows[-1].mean_inter,
    )


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: str | None = None,
    pretrained: PretrainResult | None = None,
) -> ExperimentResult:
    """Pretrain (unless given), build one shared stream, run every method."""
    cfg.validate()
    if pretrained is None:
        pretrained = pretrain_source(cfg)

    shifted = data.generate_dataset(cfg.synthetic, shift=cfg.shift)
    records: dict[str, RunRecord] = {}
    summaries: list[MethodSummary] = []
    for mcfg in cfg.methods:
        batches = data.batch_stream(shifted.target_x, shifted.target_y, mcfg.batch_size)
        model = pretrained.model.copy()
        _, record = adapt_stream(model, pretrained.stats, batches, mcfg)
        records[mcfg.run_name] = record
        summaries.append(summarize_record(mcfg.run_name, record))

    result = ExperimentResult(
        records=records,
        summaries=summaries,
        source_holdout_accuracy=pretrained.holdout_accuracy,
    )
    if out_dir is not None:
        write_experiment_outputs(result, out_dir)
    return result


# -- report files ----------------------------------------------------------------


def write_experiment_outputs(result: ExperimentResult, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    names = list(result.records)
    for name, record in result.records.items():
        adapt.write_run_record(
            record,
            os.path.join(out_dir, f"run_{name}.csv"),
            os.path.join(out_dir, f"run_{name}.json"),
        )
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(
            {
                "methods": names,
                "source_holdout_accuracy": result.source_holdout_accuracy,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    write_summary_files(result.summaries, out_dir)
    write_trajectory_files(result.records, out_dir)


SUMMARY_FIELDS = (
    "method",
    "mean_accuracy",
    "final_quarter_accuracy",
    "final_mean_intra",
    "final_mean_inter",
)


def write_summary_files(summaries: list[MethodSummary], out_dir: str) -> None:
    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_FIELDS)
        for s in summaries:
            writer.writerow(
                [
                    s.name,
                    repr(s.mean_accuracy),
                    repr(s.final_quarter_accuracy),
                    repr(s.final_mean_intra),
                    repr(s.final_mean_inter),
                ]
            )
    widths = [12, 15, 22, 18, 18]
    lines = ["".join(f"{h:<{w}}" for h, w in zip(SUMMARY_FIELDS, widths))]
    for s in summaries:
        cells = [
            s.name,
            f"{s.mean_accuracy:.4f}",
            f"{s.final_quarter_accuracy:.4f}",
            f"{s.final_mean_intra:.4f}",
            f"{s.final_mean_inter:.4f}",
        ]
        lines.append("".join(f"{c:<{w}}" for c, w in zip(cells, widths)))
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_trajectory_files(records: dict[str, RunRecord], out_dir: str) -> None:
    """Plot-data CSVs: batch index on x, one column per method."""
    names = list(records)
    columns = {
        "accuracy_trajectories.csv": "accuracy",
        "intra_distance_trajectories.csv": "mean_intra",
        "inter_distance_trajectories.csv": "mean_inter",
        "loss_trajectories.csv": "loss",
    }
    n_batches = min(len(r.rows) for r in records.values())
    for filename, attr in columns.items():
        with open(os.path.join(out_dir, filename), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["batch_index"] + names)
            for i in range(n_batches):
                writer.writerow(
                    [i] + [repr(getattr(records[n].rows[i], attr)) for n in names]
                )


def rebuild_report(run_dir: str) -> list[MethodSummary]:
    """Regenerate summary files from the RunRecord CSVs in a run directory."""
    manifest_path = os.path.join(run_dir, "manifest.json")
    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise ConfigInvalid(f"cannot read {manifest_path}: {exc}") from exc
    records: dict[str, RunRecord] = {}
    for name in manifest["methods"]:
        rows = adapt.read_run_record_rows(os.path.join(run_dir, f"run_{name}.csv"))
        records[name] = RunRecord(config=TtaConfig(method="cafa"), rows=rows)
    summaries = [summarize_record(n, r) for n, r in records.items()]
    write_summary_files(summaries, run_dir)
    write_trajectory_files(records, run_dir)
    return summaries
