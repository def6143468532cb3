"""Minimal feed-forward network with batch normalization.

Feature extractor = ordered (dense -> BN -> relu) blocks; a frozen linear
classifier sits on top. Forward passes run in one of three BN statistic
modes; gradients are taken with reverse-mode autodiff and restricted to a
parameter group (BN affine parameters only, or the whole feature extractor).
The classifier is never part of any adaptation parameter group.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from .autograd import Tensor
from .errors import (
    BatchTooSmall,
    DimensionMismatch,
    FormatVersionMismatch,
    NonFiniteLoss,
    StatsIoError,
)

BN_VAR_EPS = 1e-5
CHECKPOINT_VERSION = 1


class StatMode(enum.Enum):
    TRAIN_UPDATE = "train_update"  # batch stats, update running stats
    BATCH_ONLY = "batch_only"  # batch stats, running stats untouched
    RUNNING_EVAL = "running_eval"  # stored running stats


class ParamGroup(enum.Enum):
    BN_ONLY = "bn_only"
    FEATURE_FULL = "feature_full"


@dataclass
class DenseLayer:
    weight: np.ndarray  # out x in
    bias: np.ndarray  # out

    def __post_init__(self):
        if self.weight.shape[0] != self.bias.shape[0]:
            raise DimensionMismatch(
                f"weight rows {self.weight.shape[0]} vs bias {self.bias.shape[0]}"
            )


@dataclass
class BnLayer:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1

    @property
    def dim(self) -> int:
        return self.gamma.shape[0]


@dataclass
class Block:
    dense: DenseLayer
    bn: BnLayer


@dataclass
class AdaptiveModel:
    blocks: list[Block] = field(default_factory=list)
    classifier: DenseLayer = None

    @property
    def input_dim(self) -> int:
        return self.blocks[0].dense.weight.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.blocks[-1].dense.weight.shape[0]

    @property
    def n_classes(self) -> int:
        return self.classifier.weight.shape[0]

    def named_parameters(self) -> dict[str, np.ndarray]:
        """All trainable arrays, keyed by stable names. Arrays are live views."""
        params: dict[str, np.ndarray] = {}
        for i, blk in enumerate(self.blocks):
            params[f"block{i}.dense.weight"] = blk.dense.weight
            params[f"block{i}.dense.bias"] = blk.dense.bias
            params[f"block{i}.bn.gamma"] = blk.bn.gamma
            params[f"block{i}.bn.beta"] = blk.bn.beta
        params["classifier.weight"] = self.classifier.weight
        params["classifier.bias"] = self.classifier.bias
        return params

    def group_param_names(self, group: ParamGroup) -> list[str]:
        names = []
        for i in range(len(self.blocks)):
            if group is ParamGroup.FEATURE_FULL:
                names.append(f"block{i}.dense.weight")
                names.append(f"block{i}.dense.bias")
            names.append(f"block{i}.bn.gamma")
            names.append(f"block{i}.bn.beta")
        return names

    def copy(self) -> "AdaptiveModel":
        blocks = [
            Block(
                dense=DenseLayer(blk.dense.weight.copy(), blk.dense.bias.copy()),
                bn=BnLayer(
                    blk.bn.gamma.copy(),
                    blk.bn.beta.copy(),
                    blk.bn.running_mean.copy(),
                    blk.bn.running_var.copy(),
                    blk.bn.momentum,
                ),
            )
            for blk in self.blocks
        ]
        clf = DenseLayer(self.classifier.weight.copy(), self.classifier.bias.copy())
        return AdaptiveModel(blocks=blocks, classifier=clf)


def init_model(
    input_dim: int,
    hidden_dims: list[int],
    n_classes: int,
    rng: np.random.Generator,
    bn_momentum: float = 0.1,
) -> AdaptiveModel:
    """He-initialized dense weights, identity BN affine, unit running variance."""
    blocks = []
    fan_in = input_dim
    for width in hidden_dims:
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(width, fan_in))
        blocks.append(
            Block(
                dense=DenseLayer(weight=w, bias=np.zeros(width)),
                bn=BnLayer(
                    gamma=np.ones(width),
                    beta=np.zeros(width),
                    running_mean=np.zeros(width),
                    running_var=np.ones(width),
                    momentum=bn_momentum,
                ),
            )
        )
        fan_in = width
    clf_w = rng.normal(0.0, np.sqrt(1.0 / fan_in), size=(n_classes, fan_in))
    classifier = DenseLayer(weight=clf_w, bias=np.zeros(n_classes))
    return AdaptiveModel(blocks=blocks, classifier=classifier)


# -- forward graph -----------------------------------------------------------


def _forward_graph(model: AdaptiveModel, batch: np.ndarray, mode: StatMode):
    """Build the autodiff graph; returns (features, logits, param tensors).

    In batch-statistic modes the normalization uses the batch mean/variance,
    so gradients flow through those statistics. TRAIN_UPDATE additionally
    refreshes the running stats in place (numeric side effect only).
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatch(f"batch must be 2-D, got shape {x.shape}")
    if x.shape[1] != model.input_dim:
        raise DimensionMismatch(
            f"batch dim {x.shape[1]} vs model input dim {model.input_dim}"
        )
    uses_batch_stats = mode in (StatMode.TRAIN_UPDATE, StatMode.BATCH_ONLY)
    if uses_batch_stats and x.shape[0] < 2:
        raise BatchTooSmall("batch-statistics modes need at least 2 samples")

    params = {name: Tensor(arr) for name, arr in model.named_parameters().items()}
    h = Tensor(x)
    for i, blk in enumerate(model.blocks):
        w = params[f"block{i}.dense.weight"]
        b = params[f"block{i}.dense.bias"]
        h = h @ w.T + b
        gamma = params[f"block{i}.bn.gamma"]
        beta = params[f"block{i}.bn.beta"]
        if uses_batch_stats:
            mu = h.mean(axis=0)
            var = ((h - mu) ** 2).mean(axis=0)
            if mode is StatMode.TRAIN_UPDATE:
                m = blk.bn.momentum
                blk.bn.running_mean[:] = (1 - m) * blk.bn.running_mean + m * mu.data
                blk.bn.running_var[:] = (1 - m) * blk.bn.running_var + m * var.data
            h = (h - mu) / ((var + BN_VAR_EPS).sqrt())
        else:
            h = (h - Tensor(blk.bn.running_mean)) / np.sqrt(
                blk.bn.running_var + BN_VAR_EPS
            )
        h = (h * gamma + beta).relu()
    feats = h
    logits = feats @ params["classifier.weight"].T + params["classifier.bias"]
    return feats, logits, params


def forward_features(model: AdaptiveModel, batch, mode: StatMode) -> np.ndarray:
    feats, _, _ = _forward_graph(model, batch, mode)
    return feats.data


def forward_logits(model: AdaptiveModel, features) -> np.ndarray:
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2 or f.shape[1] != model.classifier.weight.shape[1]:
        raise DimensionMismatch(
            f"features shape {f.shape} vs classifier input "
            f"{model.classifier.weight.shape[1]}"
        )
    return f @ model.classifier.weight.T + model.classifier.bias


def predict(model: AdaptiveModel, batch, mode: StatMode) -> np.ndarray:
    feats = forward_features(model, batch, mode)
    logits = forward_logits(model, feats)
    return argmax_rows(logits)


def argmax_rows(logits: np.ndarray) -> np.ndarray:
    """Per-row argmax; ties resolve to the lowest class index."""
    return np.argmax(logits, axis=1)


# -- gradients ---------------------------------------------------------------


def _loss_graph(model, batch, mode, loss_spec, pseudo_labels=None):
    # imported here to keep network <-> losses import acyclic
    from .losses import loss_tensor

    feats, logits, params = _forward_graph(model, batch, mode)
    loss = loss_tensor(loss_spec, feats, logits, pseudo_labels=pseudo_labels)
    return loss, params


def evaluate_loss(model, batch, mode, loss_spec, pseudo_labels=None) -> float:
    """Scalar loss value for the given spec; used by grads and FD checks."""
    loss, _ = _loss_graph(model, batch, mode, loss_spec, pseudo_labels)
    return float(loss.data)


def loss_and_grad_named(
    model: AdaptiveModel,
    batch,
    mode: StatMode,
    loss_spec,
    names: list[str],
    pseudo_labels=None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss value plus gradients w.r.t. the named parameters only."""
    loss, params = _loss_graph(model, batch, mode, loss_spec, pseudo_labels)
    if not np.isfinite(loss.data):
        raise NonFiniteLoss(f"loss evaluated to {float(loss.data)}")
    loss.backward()
    return float(loss.data), {name: params[name].grad.copy() for name in names}


def grad_named(
    model: AdaptiveModel,
    batch,
    mode: StatMode,
    loss_spec,
    names: list[str],
    pseudo_labels=None,
) -> dict[str, np.ndarray]:
    return loss_and_grad_named(model, batch, mode, loss_spec, names, pseudo_labels)[1]


def grad(
    model: AdaptiveModel,
    batch,
    mode: StatMode,
    loss_spec,
    group: ParamGroup,
) -> dict[str, np.ndarray]:
    """Gradients restricted to a parameter group; classifier never included."""
    return grad_named(model, batch, mode, loss_spec, model.group_param_names(group))


# -- checkpoint i/o -----------------------------------------------------------


def save_checkpoint(model: AdaptiveModel, path) -> None:
    """Flat key/value serialization; round-trips float64 losslessly."""
    arrays: dict[str, np.ndarray] = dict(model.named_parameters())
    layout = []
    for i, blk in enumerate(model.blocks):
        arrays[f"block{i}.bn.running_mean"] = blk.bn.running_mean
        arrays[f"block{i}.bn.running_var"] = blk.bn.running_var
        arrays[f"block{i}.bn.momentum"] = np.asarray(blk.bn.momentum)
    for name, arr in arrays.items():
        layout.append({"name": name, "shape": list(np.asarray(arr).shape)})
    header = {
        "format_version": CHECKPOINT_VERSION,
        "n_blocks": len(model.blocks),
        "layout": layout,
    }
    np.savez(path, __header__=np.frombuffer(json.dumps(header).encode(), np.uint8), **arrays)


def load_checkpoint(path) -> AdaptiveModel:
    try:
        with np.load(path) as data:
            arrays = {k: data[k] for k in data.files}
    except OSError as exc:
        raise StatsIoError(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        header = json.loads(bytes(arrays.pop("__header__")).decode())
    except (KeyError, ValueError) as exc:
        raise StatsIoError(f"malformed checkpoint header in {path}") from exc
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise FormatVersionMismatch(
            f"checkpoint version {header.get('format_version')} != {CHECKPOINT_VERSION}"
        )
    blocks = []
    for i in range(header["n_blocks"]):
        blocks.append(
            Block(
                dense=DenseLayer(
                    weight=arrays[f"block{i}.dense.weight"],
                    bias=arrays[f"block{i}.dense.bias"],
                ),
                bn=BnLayer(
                    gamma=arrays[f"block{i}.bn.gamma"],
                    beta=arrays[f"block{i}.bn.beta"],
                    running_mean=arrays[f"block{i}.bn.running_mean"],
                    running_var=arrays[f"block{i}.bn.running_var"],
                    momentum=float(arrays[f"block{i}.bn.momentum"]),
                ),
            )
        )
    classifier = DenseLayer(
        weight=arrays["classifier.weight"], bias=arrays["classifier.bias"]
    )
    return AdaptiveModel(blocks=blocks, classifier=classifier)
