"""Synthetic Gaussian-mixture datasets with controllable covariate shifts.

The target stream is a fresh draw from the source mixture pushed through
the configured shift transforms; labels are untouched by every shift.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigInvalid

# severity 1..5 magnitude tables, strictly increasing
NOISE_SIGMA_SCALE = {1: 0.2, 2: 0.4, 3: 0.6, 4: 0.9, 5: 1.3}  # x mean class std
MEAN_SHIFT_SCALE = {1: 0.5, 2: 1.0, 3: 1.5, 4: 2.0, 5: 3.0}  # x mean class std
SCALING_FACTOR = {1: 1.2, 2: 1.5, 3: 2.0, 4: 2.5, 5: 3.0}
ROTATION_DEGREES = {1: 10.0, 2: 20.0, 3: 30.0, 4: 45.0, 5: 60.0}

SHIFT_KINDS = ("gaussian_noise", "mean_shift", "scaling", "rotation")


@dataclass
class ShiftTransform:
    kind: str
    direction: list[float] | None = None  # mean_shift only
    plane: tuple[int, int] = (0, 1)  # rotation only

    def validate(self, input_dim: int) -> None:
        if self.kind not in SHIFT_KINDS:
            raise ConfigInvalid(f"unknown shift kind {self.kind!r}")
        if self.kind == "mean_shift":
            if self.direction is None or len(self.direction) != input_dim:
                raise ConfigInvalid("mean_shift needs a direction of input_dim length")
        if self.kind == "rotation":
            i, j = self.plane
            if not (0 <= i < input_dim and 0 <= j < input_dim and i != j):
                raise ConfigInvalid(f"invalid rotation plane {self.plane}")


@dataclass
class ShiftSpec:
    transforms: list[ShiftTransform]
    severity: int = 5

    def validate(self, input_dim: int) -> None:
        if not 1 <= self.severity <= 5:
            raise ConfigInvalid(f"severity {self.severity} outside 1..5")
        for t in self.transforms:
            t.validate(input_dim)


@dataclass
class SyntheticSpec:
    n_classes: int = 3
    input_dim: int = 8
    mean_scale: float = 2.4  # class-mean radius from the origin
    n_train_per_class: int = 500
    n_test_per_class: int = 1280
    seed: int = 0  # sampling only; geometry is pinned by geometry_seed
    geometry_seed: int = 7
    cov_scales: list[float] | None = None  # per-class isotropic stds
    class_means: np.ndarray | None = None  # C x input_dim; generated if None
    class_covs: np.ndarray | None = None  # C x d x d; overrides cov_scales

    def validate(self) -> None:
        if self.n_classes < 2:
            raise ConfigInvalid("classification needs n_classes >= 2")
        if self.input_dim < 2:
            raise ConfigInvalid("input_dim must be >= 2")
        if self.n_train_per_class < 2 or self.n_test_per_class < 2:
            raise ConfigInvalid("need at least 2 samples per class")
        if self.cov_scales is not None and len(self.cov_scales) != self.n_classes:
            raise ConfigInvalid("cov_scales must list one std per class")

    def resolved_means(self) -> np.ndarray:
        if self.class_means is not None:
            means = np.asarray(self.class_means, dtype=np.float64)
        else:
            rng = np.random.default_rng(self.geometry_seed)
            raw = rng.normal(size=(self.n_classes, self.input_dim))
            raw -= raw.mean(axis=0)
            means = self.mean_scale * raw / np.linalg.norm(raw, axis=1, keepdims=True)
        if len({tuple(m) for m in means}) != self.n_classes:
            raise ConfigInvalid("class means must be distinct")
        return means

    def resolved_covs(self) -> np.ndarray:
        if self.class_covs is not None:
            return np.asarray(self.class_covs, dtype=np.float64)
        if self.cov_scales is not None:
            scales = np.asarray(self.cov_scales, dtype=np.float64)
        else:
            # heteroscedastic classes: a tight, a medium, and a wide cluster
            scales = np.geomspace(0.2, 1.5, self.n_classes)
        eye = np.eye(self.input_dim)
        return np.stack([s * s * eye for s in scales])

    def mean_class_std(self) -> float:
        covs = self.resolved_covs()
        return float(
            np.mean([np.sqrt(np.mean(np.diag(c))) for c in covs])
        )


@dataclass
class Dataset:
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray  # held-out unshifted source test data
    test_y: np.ndarray
    target_x: np.ndarray  # shifted target stream, in stream order
    target_y: np.ndarray


def _sample_mixture(spec: SyntheticSpec, n_per_class: int, rng: np.random.Generator):
    means = spec.resolved_means()
    covs = spec.resolved_covs()
    xs, ys = [], []
    for c in range(spec.n_classes):
        xs.append(rng.multivariate_normal(means[c], covs[c], size=n_per_class))
        ys.append(np.full(n_per_class, c, dtype=np.int64))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    order = rng.permutation(x.shape[0])
    return x[order], y[order]


def apply_shift(
    x: np.ndarray,
    shift: ShiftSpec,
    spec: SyntheticSpec,
    rng: np.random.Generator,
) -> np.ndarray:
    """Apply the shift transforms in order; label-preserving by construction."""
    shift.validate(spec.input_dim)
    std = spec.mean_class_std()
    out = np.array(x, dtype=np.float64)
    for t in shift.transforms:
        if t.kind == "gaussian_noise":
            sigma = NOISE_SIGMA_SCALE[shift.severity] * std
            out = out + rng.normal(0.0, sigma, size=out.shape)
        elif t.kind == "mean_shift":
            direction = np.asarray(t.direction, dtype=np.float64)
            direction = direction / np.linalg.norm(direction)
            out = out + MEAN_SHIFT_SCALE[shift.severity] * std * direction
        elif t.kind == "scaling":
            out = out * SCALING_FACTOR[shift.severity]
        elif t.kind == "rotation":
            theta = np.deg2rad(ROTATION_DEGREES[shift.severity])
            i, j = t.plane
            rot = out.copy()
            rot[:, i] = np.cos(theta) * out[:, i] - np.sin(theta) * out[:, j]
            rot[:, j] = np.sin(theta) * out[:, i] + np.cos(theta) * out[:, j]
            out = rot
    return out


def generate_dataset(spec: SyntheticSpec, shift: ShiftSpec | None = None) -> Dataset:
    """Source train/test draws plus a (possibly shifted) target stream.

    Deterministic given spec.seed; the target stream is an independent
    source-like draw pushed through the shift transforms.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    train_x, train_y = _sample_mixture(spec, spec.n_train_per_class, rng)
    test_x, test_y = _sample_mixture(spec, spec.n_test_per_class, rng)
    target_x, target_y = _sample_mixture(spec, spec.n_test_per_class, rng)
    if shift is not None:
        target_x = apply_shift(target_x, shift, spec, rng)
    return Dataset(train_x, train_y, test_x, test_y, target_x, target_y)


def batch_stream(x: np.ndarray, y: np.ndarray, batch_size: int):
    """Chop an ordered target set into full batches (trailing remainder dropped)."""
    if batch_size < 2:
        raise ConfigInvalid("batch_size must be >= 2")
    n_batches = x.shape[0] // batch_size
    return [
        (x[i * batch_size : (i + 1) * batch_size], y[i * batch_size : (i + 1) * batch_size])
        for i in range(n_batches)
    ]
