"""Experiment configuration: nested dataclasses with strict JSON parsing.

Unknown keys anywhere in the document are rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

import numpy as np

from .adapt import TtaConfig
from .data import ShiftSpec, ShiftTransform, SyntheticSpec
from .errors import ConfigInvalid
from .stats import DEFAULT_EPS_SCALE, CovarianceMode


def _strict_kwargs(cls, d: dict, section: str) -> dict:
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigInvalid(f"unknown keys in section {section!r}: {sorted(unknown)}")
    return d


@dataclass
class ModelConfig:
    hidden_dims: list[int] = field(default_factory=lambda: [32, 16])
    bn_momentum: float = 0.1
    seed: int = 0

    def validate(self) -> None:
        if not self.hidden_dims:
            raise ConfigInvalid("hidden_dims must list at least one block width")
        if not all(int(w) >= 1 for w in self.hidden_dims):
            raise ConfigInvalid("hidden_dims entries must be >= 1")
        if not 0.0 < self.bn_momentum < 1.0:
            raise ConfigInvalid("bn_momentum must lie in (0, 1)")


@dataclass
class PretrainConfig:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    eps_scale: float = DEFAULT_EPS_SCALE
    covariance_mode: str = "class_wise"

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 2:
            raise ConfigInvalid("pretrain needs epochs >= 1 and batch_size >= 2")
        if self.learning_rate <= 0 or self.eps_scale <= 0:
            raise ConfigInvalid("learning_rate and eps_scale must be > 0")
        try:
            CovarianceMode(self.covariance_mode)
        except ValueError:
            raise ConfigInvalid(
                f"covariance_mode must be one of "
                f"{[m.value for m in CovarianceMode]}, got {self.covariance_mode!r}"
            ) from None

    @property
    def cov_mode(self) -> CovarianceMode:
        return CovarianceMode(self.covariance_mode)


@dataclass
class ExperimentConfig:
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    shift: ShiftSpec | None = None
    model: ModelConfig = field(default_factory=ModelConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    methods: list[TtaConfig] = field(default_factory=list)
    output_dir: str = "runs"

    def validate(self) -> None:
        self.synthetic.validate()
        if self.shift is not None:
            self.shift.validate(self.synthetic.input_dim)
        self.model.validate()
        self.pretrain.validate()
        if not self.methods:
            raise ConfigInvalid("methods list is empty")
        names = [m.run_name for m in self.methods]
        if len(set(names)) != len(names):
            raise ConfigInvalid(f"duplicate run names in experiment: {names}")
        for m in self.methods:
            m.validate()

    @staticmethod
    def from_dict(doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        top_known = {"synthetic", "shift", "model", "pretrain", "methods", "output_dir"}
        unknown = set(doc) - top_known
        if unknown:
            raise ConfigInvalid(f"unknown top-level keys: {sorted(unknown)}")

        cfg = ExperimentConfig()
        if "synthetic" in doc:
            cfg.synthetic = SyntheticSpec(
                **_strict_kwargs(SyntheticSpec, doc["synthetic"], "synthetic")
            )
        if doc.get("shift") is not None:
            sd = dict(doc["shift"])
            unknown = set(sd) - {"transforms", "severity"}
            if unknown:
                raise ConfigInvalid(f"unknown keys in section 'shift': {sorted(unknown)}")
            transforms = []
            for td in sd.get("transforms", []):
                td = _strict_kwargs(ShiftTransform, dict(td), "shift.transforms[]")
                if "plane" in td:
                    td["plane"] = tuple(td["plane"])
                transforms.append(ShiftTransform(**td))
            cfg.shift = ShiftSpec(transforms=transforms, severity=sd.get("severity", 5))
        if "model" in doc:
            cfg.model = ModelConfig(**_strict_kwargs(ModelConfig, doc["model"], "model"))
        if "pretrain" in doc:
            cfg.pretrain = PretrainConfig(
                **_strict_kwargs(PretrainConfig, doc["pretrain"], "pretrain")
            )
        if "methods" in doc:
            cfg.methods = [TtaConfig.from_dict(m) for m in doc["methods"]]
        if "output_dir" in doc:
            cfg.output_dir = doc["output_dir"]
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        synthetic = {
            "n_classes": self.synthetic.n_classes,
            "input_dim": self.synthetic.input_dim,
            "mean_scale": self.synthetic.mean_scale,
            "n_train_per_class": self.synthetic.n_train_per_class,
            "n_test_per_class": self.synthetic.n_test_per_class,
            "seed": self.synthetic.seed,
            "geometry_seed": self.synthetic.geometry_seed,
        }
        if self.synthetic.cov_scales is not None:
            synthetic["cov_scales"] = list(self.synthetic.cov_scales)
        if self.synthetic.class_means is not None:
            synthetic["class_means"] = np.asarray(self.synthetic.class_means).tolist()
        if self.synthetic.class_covs is not None:
            synthetic["class_covs"] = np.asarray(self.synthetic.class_covs).tolist()
        shift = None
        if self.shift is not None:
            shift = {
                "severity": self.shift.severity,
                "transforms": [
                    {
                        k: v
                        for k, v in (
                            ("kind", t.kind),
                            ("direction", t.direction),
                            ("plane", list(t.plane)),
                        )
                        if not (k == "direction" and v is None)
                    }
                    for t in self.shift.transforms
                ],
            }
        return {
            "synthetic": synthetic,
            "shift": shift,
            "model": {
                "hidden_dims": list(self.model.hidden_dims),
                "bn_momentum": self.model.bn_momentum,
                "seed": self.model.seed,
            },
            "pretrain": {
                "epochs": self.pretrain.epochs,
                "batch_size": self.pretrain.batch_size,
                "learning_rate": self.pretrain.learning_rate,
                "seed": self.pretrain.seed,
                "eps_scale": self.pretrain.eps_scale,
                "covariance_mode": self.pretrain.covariance_mode,
            },
            "methods": [m.to_dict() for m in self.methods],
            "output_dir": self.output_dir,
        }

    @staticmethod
    def default(seed: int = 0, output_dir: str = "runs") -> "ExperimentConfig":
        """The stock benchmark: heteroscedastic 3-class mixture, severity-5
        additive noise, 60 online batches of 64, all seven methods.

        `seed` drives data sampling only; the mixture geometry stays fixed
        so different seeds are honest re-draws of the same problem.
        """
        cfg = ExperimentConfig(
            synthetic=SyntheticSpec(seed=seed, cov_scales=[0.2, 0.6, 1.5]),
            shift=ShiftSpec(
                transforms=[ShiftTransform(kind="gaussian_noise")], severity=5
            ),
            model=ModelConfig(),
            pretrain=PretrainConfig(eps_scale=1e-3),
            methods=[
                TtaConfig(method="source", steps_per_batch=0),
                TtaConfig(method="bn", steps_per_batch=0),
                TtaConfig(method="pl"),
                TtaConfig(method="entropy"),
                TtaConfig(method="global_fa"),
                TtaConfig(method="intra"),
                TtaConfig(method="cafa", steps_per_batch=2),
            ],
            output_dir=output_dir,
        )
        cfg.validate()
        return cfg

    @staticmethod
    def from_json_file(path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"config {path} is not valid JSON: {exc}") from exc
        return ExperimentConfig.from_dict(doc)
