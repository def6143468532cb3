"""Alignment distances and all adaptation/baseline losses.

Mahalanobis distances use the cached regularized precision matrices of the
source statistics, so the plain-number operations and the differentiable
graph path agree to the last bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor
from .errors import (
    BatchTooSmall,
    DimensionMismatch,
    SingleClass,
    UnknownClass,
)
from .network import argmax_rows
from .stats import ClassGaussian, SourceStats

RATIO_FLOOR = 1e-12  # clamp for the log-ratio numerator and denominator


# -- loss specs ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GlobalFA:
    stats: SourceStats


@dataclass(frozen=True, eq=False)
class IntraOnly:
    stats: SourceStats


@dataclass(frozen=True, eq=False)
class Cafa:
    stats: SourceStats


@dataclass(frozen=True)
class Entropy:
    pass


@dataclass(frozen=True)
class PseudoLabelCE:
    pass


@dataclass(frozen=True, eq=False)
class SupervisedCE:
    labels: np.ndarray


LOSS_SPECS = (GlobalFA, IntraOnly, Cafa, Entropy, PseudoLabelCE, SupervisedCE)


@dataclass
class DistanceReport:
    mean_intra: float
    mean_inter: float


# -- plain-number distance operations -----------------------------------------


def mahalanobis(x_feat: np.ndarray, g: ClassGaussian) -> float:
    x = np.asarray(x_feat, dtype=np.float64)
    if x.shape != g.mu.shape:
        raise DimensionMismatch(f"feature shape {x.shape} vs mean {g.mu.shape}")
    delta = x - g.mu
    return float(delta @ g.precision @ delta)


def _check_label(label: int, stats: SourceStats) -> int:
    label = int(label)
    if not 0 <= label < stats.n_classes:
        raise UnknownClass(f"label {label} outside 0..{stats.n_classes - 1}")
    return label


def intra_distance(x_feat, label: int, stats: SourceStats) -> float:
    return mahalanobis(x_feat, stats.classes[_check_label(label, stats)])


def inter_distance(x_feat, label: int, stats: SourceStats) -> float:
    if stats.n_classes < 2:
        raise SingleClass("inter-class distance needs at least 2 classes")
    label = _check_label(label, stats)
    total = 0.0
    for c, g in enumerate(stats.classes):
        if c != label:
            total += mahalanobis(x_feat, g)
    return total / (stats.n_classes - 1)


def class_distance_matrix(batch_feats: np.ndarray, stats: SourceStats) -> np.ndarray:
    """Mahalanobis distance of every sample to every class Gaussian, N x C."""
    feats = np.asarray(batch_feats, dtype=np.float64)
    cols = []
    for g in stats.classes:
        diff = feats - g.mu
        cols.append(np.einsum("ij,jk,ik->i", diff, g.precision, diff))
    return np.stack(cols, axis=1)


def distance_report(batch_feats, true_labels, stats: SourceStats) -> DistanceReport:
    """Batch-mean intra/inter distances under ground-truth labels.

    Instrumentation only; no loss ever consumes ground-truth labels.
    """
    y = np.asarray(true_labels, dtype=np.int64)
    intra = [intra_distance(x, c, stats) for x, c in zip(batch_feats, y)]
    inter = [inter_distance(x, c, stats) for x, c in zip(batch_feats, y)]
    return DistanceReport(
        mean_intra=float(np.mean(intra)), mean_inter=float(np.mean(inter))
    )


# -- differentiable loss graph -------------------------------------------------


def _labels_for(spec, logits: Tensor, pseudo_labels):
    if pseudo_labels is not None:
        return np.asarray(pseudo_labels, dtype=np.int64)
    if isinstance(spec, SupervisedCE):
        return np.asarray(spec.labels, dtype=np.int64)
    return argmax_rows(logits.data)


def _one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise UnknownClass(f"labels outside 0..{n_classes - 1}")
    eye = np.eye(n_classes)
    return eye[labels]


def _class_quadratics(feats: Tensor, stats: SourceStats) -> list[Tensor]:
    """Per-class Mahalanobis quadratic forms, each an N-vector tensor."""
    out = []
    for g in stats.classes:
        diff = feats - Tensor(g.mu)
        out.append(((diff @ Tensor(g.precision)) * diff).sum(axis=1))
    return out


def _intra_terms(feats: Tensor, labels: np.ndarray, stats: SourceStats) -> Tensor:
    quads = _class_quadratics(feats, stats)
    onehot = _one_hot(labels, stats.n_classes)
    intra = quads[0] * onehot[:, 0]
    for c in range(1, stats.n_classes):
        intra = intra + quads[c] * onehot[:, c]
    return intra, quads


def _cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    onehot = _one_hot(labels, logits.shape[1])
    shift = Tensor(logits.data.max(axis=1, keepdims=True))  # detached stabilizer
    z = logits - shift
    lse = z.exp().sum(axis=1, keepdims=True).log() + shift
    picked = (logits * onehot).sum(axis=1, keepdims=True)
    return (lse - picked).mean()


def loss_tensor(spec, feats: Tensor, logits: Tensor, pseudo_labels=None) -> Tensor:
    """Build the scalar loss node for any LossSpec.

    pseudo_labels, when given, overrides the argmax labels (used to freeze
    labels across finite-difference evaluations).
    """
    if isinstance(spec, GlobalFA):
        n = feats.shape[0]
        if n < 2:
            raise BatchTooSmall("batch covariance needs at least 2 samples")
        stats = spec.stats
        mu_t = feats.mean(axis=0)
        centered = feats - mu_t
        sigma_t = (centered.T @ centered) * (1.0 / n)
        mean_gap = ((Tensor(stats.global_mu) - mu_t) ** 2).sum()
        cov_gap = ((Tensor(stats.global_sigma) - sigma_t) ** 2).sum()
        return mean_gap + cov_gap

    if isinstance(spec, IntraOnly):
        labels = _labels_for(spec, logits, pseudo_labels)
        intra, _ = _intra_terms(feats, labels, spec.stats)
        return intra.mean()

    if isinstance(spec, Cafa):
        labels = _labels_for(spec, logits, pseudo_labels)
        intra, quads = _intra_terms(feats, labels, spec.stats)
        denom = quads[0]
        for q in quads[1:]:
            denom = denom + q
        ratio_log = intra.clip_min(RATIO_FLOOR).log() - denom.clip_min(
            RATIO_FLOOR
        ).log()
        return ratio_log.mean()

    if isinstance(spec, Entropy):
        shift = Tensor(logits.data.max(axis=1, keepdims=True))  # detached
        z = logits - shift
        lse = z.exp().sum(axis=1, keepdims=True).log() + shift
        neg_logp = lse - logits
        p = (-neg_logp).exp()
        return (p * neg_logp).sum(axis=1).mean()

    if isinstance(spec, PseudoLabelCE):
        labels = _labels_for(spec, logits, pseudo_labels)
        return _cross_entropy(logits, labels)

    if isinstance(spec, SupervisedCE):
        labels = _labels_for(spec, logits, pseudo_labels)
        return _cross_entropy(logits, labels)

    raise TypeError(f"unknown loss spec: {spec!r}")


# -- plain-number loss wrappers ------------------------------------------------


def loss_global_fa(batch_feats, stats: SourceStats) -> float:
    return float(loss_tensor(GlobalFA(stats), Tensor(batch_feats), None).data)


def loss_intra(batch_feats, pseudo_labels, stats: SourceStats) -> float:
    spec = IntraOnly(stats)
    return float(
        loss_tensor(spec, Tensor(batch_feats), None, pseudo_labels=pseudo_labels).data
    )


def loss_cafa(batch_feats, pseudo_labels, stats: SourceStats) -> float:
    spec = Cafa(stats)
    return float(
        loss_tensor(spec, Tensor(batch_feats), None, pseudo_labels=pseudo_labels).data
    )


def loss_entropy(logits) -> float:
    return float(loss_tensor(Entropy(), None, Tensor(logits)).data)


def loss_pseudo_label(logits, pseudo_labels) -> float:
    return float(
        loss_tensor(
            PseudoLabelCE(), None, Tensor(logits), pseudo_labels=pseudo_labels
        ).data
    )
