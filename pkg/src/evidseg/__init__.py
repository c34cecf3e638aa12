"""Evidential multi-phase segmentation toolkit.

Subjective-logic opinions backed by Dirichlet evidence, a pixel-wise
belief-combination rule for fusing per-phase experts, a small autodiff
engine and convolutional evidence network, synthetic multi-phase phantom
data with robustness perturbations, and uncertainty-aware evaluation
metrics with CSV/SVG reporting.
"""

from .errors import (
    ConfigError,
    DegenerateCorrelation,
    DegenerateOpinion,
    DomainError,
    EmptyFusion,
    EmptyInput,
    EvidsegError,
    GraphError,
    InvalidEvidence,
    ParseError,
    ShapeError,
    TotalConflict,
)
from .special import digamma, trigamma
from .opinions import (
    CategorySet,
    DirichletParams,
    Opinion,
    OpinionGrid,
    alpha_to_opinion,
    average_grids,
    combine,
    combine_grids,
    combine_grids_many,
    combine_many,
    conflict,
    evidence_to_alpha,
    expected_probability,
    fused_prediction,
    opinion_to_alpha,
    vacuous_opinion,
)
from .autodiff import Tensor, no_grad
from .losses import (
    LossWeights,
    combined_loss,
    dice_loss,
    evidence_loss,
    loss_gradients,
    one_hot,
    total_loss,
)
from .phantom import (
    PHASES,
    PerturbSpec,
    PhaseStack,
    generate_phantom,
    hu_window,
    perturb,
)
from .network import (
    Adam,
    Model,
    NetworkConfig,
    PipelineResult,
    TrainConfig,
    backward_and_step,
    cosine_lr,
    forward_pipeline,
    load_model,
    save_model,
    train,
)
from .metrics import (
    EvalRecord,
    MetricsReport,
    dcs,
    dgs,
    dice_score,
    ece,
    neg_log_ece,
    ueo,
    volume_correlation,
)
from .evaluate import evaluate_model
from .tensorio import (
    load_checkpoint,
    load_dataset,
    read_tensor,
    save_checkpoint,
    save_dataset,
    write_tensor,
)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "CategorySet",
    "ConfigError",
    "DegenerateCorrelation",
    "DegenerateOpinion",
    "DirichletParams",
    "DomainError",
    "EmptyFusion",
    "EmptyInput",
    "EvalRecord",
    "EvidsegError",
    "GraphError",
    "InvalidEvidence",
    "LossWeights",
    "MetricsReport",
    "Model",
    "NetworkConfig",
    "Opinion",
    "OpinionGrid",
    "PHASES",
    "ParseError",
    "PerturbSpec",
    "PhaseStack",
    "PipelineResult",
    "ShapeError",
    "Tensor",
    "TotalConflict",
    "TrainConfig",
    "alpha_to_opinion",
    "average_grids",
    "backward_and_step",
    "combine",
    "combine_grids",
    "combine_grids_many",
    "combine_many",
    "combined_loss",
    "conflict",
    "cosine_lr",
    "dcs",
    "dgs",
    "dice_loss",
    "dice_score",
    "digamma",
    "ece",
    "evaluate_model",
    "evidence_loss",
    "evidence_to_alpha",
    "expected_probability",
    "forward_pipeline",
    "fused_prediction",
    "generate_phantom",
    "hu_window",
    "load_checkpoint",
    "load_dataset",
    "load_model",
    "loss_gradients",
    "neg_log_ece",
    "no_grad",
    "one_hot",
    "opinion_to_alpha",
    "perturb",
    "read_tensor",
    "save_checkpoint",
    "save_dataset",
    "save_model",
    "total_loss",
    "train",
    "trigamma",
    "ueo",
    "vacuous_opinion",
    "volume_correlation",
    "write_tensor",
]
