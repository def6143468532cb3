"""Online test-time adaptation engine.

Streams target batches in order, records pre-update predictions, then runs
the configured number of Adam steps on the selected parameter group.
Batches are never revisited.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import losses, network
from .errors import ConfigInvalid, DimensionMismatch, NonFiniteLoss
from .network import AdaptiveModel, ParamGroup, StatMode
from .stats import SourceStats

METHODS = ("source", "bn", "pl", "entropy", "global_fa", "intra", "cafa")
NO_LOSS_METHODS = ("source", "bn")
STATS_METHODS = ("global_fa", "intra", "cafa")


@dataclass
class TtaConfig:
    method: str = "cafa"
    name: str = ""  # run label; defaults to the method name
    param_group: ParamGroup = ParamGroup.BN_ONLY
    steps_per_batch: int = 1
    learning_rate: float = 1e-3
    batch_size: int = 64
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    @property
    def run_name(self) -> str:
        return self.name or self.method

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigInvalid(f"unknown method {self.method!r}; one of {METHODS}")
        if self.method in NO_LOSS_METHODS:
            if self.steps_per_batch != 0:
                raise ConfigInvalid(
                    f"method {self.method!r} performs no optimization; "
                    "steps_per_batch must be 0"
                )
        elif self.steps_per_batch < 1:
            raise ConfigInvalid("steps_per_batch must be >= 1 for optimizing methods")
        if self.learning_rate <= 0:
            raise ConfigInvalid("learning_rate must be > 0")
        if self.batch_size < 2:
            raise ConfigInvalid("batch_size must be >= 2")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["param_group"] = self.param_group.value
        return d

    @staticmethod
    def from_dict(d: dict) -> "TtaConfig":
        d = dict(d)
        known = set(TtaConfig().to_dict())
        unknown = set(d) - known
        if unknown:
            raise ConfigInvalid(f"unknown TtaConfig keys: {sorted(unknown)}")
        if "param_group" in d:
            d["param_group"] = ParamGroup(d["param_group"])
        return TtaConfig(**d)


def method_loss_spec(method: str, stats: SourceStats | None):
    if method in NO_LOSS_METHODS:
        return None
    if method == "pl":
        return losses.PseudoLabelCE()
    if method == "entropy":
        return losses.Entropy()
    if stats is None:
        raise ConfigInvalid(f"method {method!r} requires source statistics")
    if method == "global_fa":
        return losses.GlobalFA(stats)
    if method == "intra":
        return losses.IntraOnly(stats)
    if method == "cafa":
        return losses.Cafa(stats)
    raise ConfigInvalid(f"unknown method {method!r}")


def method_stat_mode(method: str) -> StatMode:
    # Source predicts with stored running statistics; every other method
    # normalizes with current-batch statistics.
    return StatMode.RUNNING_EVAL if method == "source" else StatMode.BATCH_ONLY


# -- Adam ----------------------------------------------------------------------


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One in-place Adam update with bias correction."""
    state.t += 1
    t = state.t
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise DimensionMismatch(f"{name}: grad {g.shape} vs param {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m[:] = beta1 * m + (1 - beta1) * g
        v[:] = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)


# -- run records -----------------------------------------------------------------


@dataclass
class BatchRow:
    batch_index: int
    accuracy: float
    loss: float
    mean_intra: float
    mean_inter: float
    wall_time: float


@dataclass
class RunRecord:
    config: TtaConfig
    rows: list[BatchRow] = field(default_factory=list)

    def accuracies(self) -> np.ndarray:
        return np.array([r.accuracy for r in self.rows])


CSV_FIELDS = ("batch_index", "accuracy", "loss", "mean_intra", "mean_inter")


def write_run_record(record: RunRecord, csv_path, header_path=None) -> None:
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for r in record.rows:
            writer.writerow(
                [r.batch_index, repr(r.accuracy), repr(r.loss), repr(r.mean_intra), repr(r.mean_inter)]
            )
    if header_path is not None:
        with open(header_path, "w") as fh:
            json.dump({"config": record.config.to_dict()}, fh, indent=2, sort_keys=True)
            fh.write("\n")


def read_run_record_rows(csv_path) -> list[BatchRow]:
    rows = []
    with open(csv_path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                BatchRow(
                    batch_index=int(rec["batch_index"]),
                    accuracy=float(rec["accuracy"]),
                    loss=float(rec["loss"]),
                    mean_intra=float(rec["mean_intra"]),
                    mean_inter=float(rec["mean_inter"]),
                    wall_time=0.0,
                )
            )
    return rows


# -- the adaptation loop ----------------------------------------------------------


def adapt_stream(
    model: AdaptiveModel,
    stats: SourceStats | None,
    batches,
    config: TtaConfig,
) -> tuple[AdaptiveModel, RunRecord]:
    """Adapt `model` over an ordered stream of (inputs, labels) batches.

    Labels travel with batches strictly for metrics (accuracy and the
    distance report); no loss path reads them. Predictions for each batch
    are recorded before any parameter update driven by that batch.
    """
    config.validate()
    spec = method_loss_spec(config.method, stats)
    mode = method_stat_mode(config.method)
    record = RunRecord(config=config)
    adam = AdamState()
    params = model.named_parameters()
    group_names = model.group_param_names(config.param_group)

    for batch_index, (x, y) in enumerate(batches):
        t0 = time.perf_counter()
        y = np.asarray(y, dtype=np.int64)
        feats = network.forward_features(model, x, mode)
        logits = network.forward_logits(model, feats)
        preds = network.argmax_rows(logits)
        accuracy = float(np.mean(preds == y))

        mean_intra = float("nan")
        mean_inter = float("nan")
        if stats is not None and stats.n_classes >= 2:
            report = losses.distance_report(feats, y, stats)
            mean_intra = report.mean_intra
            mean_inter = report.mean_inter

        loss_value = float("nan")
        if spec is not None:
            for _ in range(config.steps_per_batch):
                # recomputed forward: pseudo-labels track current parameters
                try:
                    step_loss, grads = network.loss_and_grad_named(
                        model, x, mode, spec, group_names
                    )
                except NonFiniteLoss as exc:
                    exc.record = record
                    raise
                if np.isnan(loss_value):
                    loss_value = step_loss
                adam_step(
                    params,
                    grads,
                    adam,
                    config.learning_rate,
                    config.adam_beta1,
                    config.adam_beta2,
                    config.adam_eps,
                )

        record.rows.append(
            BatchRow(
                batch_index=batch_index,
                accuracy=accuracy,
                loss=loss_value,
                mean_intra=mean_intra,
                mean_inter=mean_inter,
                wall_time=time.perf_counter() - t0,
            )
        )
    return model, record
