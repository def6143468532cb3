"""Class-aware feature alignment for test-time adaptation, at desk scale."""

from .adapt import AdamState, RunRecord, TtaConfig, adam_step, adapt_stream
from .config import ExperimentConfig, ModelConfig, PretrainConfig
from .data import Dataset, ShiftSpec, ShiftTransform, SyntheticSpec, generate_dataset
from .losses import (
    Cafa,
    DistanceReport,
    Entropy,
    GlobalFA,
    IntraOnly,
    PseudoLabelCE,
    SupervisedCE,
    distance_report,
    inter_distance,
    intra_distance,
    loss_cafa,
    loss_entropy,
    loss_global_fa,
    loss_intra,
    loss_pseudo_label,
    mahalanobis,
)
from .network import (
    AdaptiveModel,
    BnLayer,
    DenseLayer,
    ParamGroup,
    StatMode,
    forward_features,
    forward_logits,
    grad,
    init_model,
    load_checkpoint,
    predict,
    save_checkpoint,
)
from .stats import (
    ClassGaussian,
    CovarianceMode,
    SourceStats,
    estimate_source_stats,
    fit_source_stats,
    load_stats,
    save_stats,
)

__version__ = "0.1.0"
