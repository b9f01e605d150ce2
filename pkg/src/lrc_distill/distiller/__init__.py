from .distiller import Distiller, distill, perturbation
from .metrics import evaluate, layer_diagnostics, predict
from .models import (
    Ablation,
    CosineGranularity,
    DistillConfig,
    LrSchedule,
    OptimizerKind,
    PerturbationScope,
    StepRecord,
)
from .negatives import gather_negative_traces, negative_index_matrix, sample_negatives
from .objective import prediction_losses, step_objective, transformer_stage_loss
from .optim import (
    SGD,
    Adam,
    Momentum,
    Optimizer,
    build_optimizer,
    grad_norm,
    scheduled_learning_rate,
)
from .projection import Projection
from .schedule import default_layer_map, resolve_layer_map, stage_boundary, stage_of, stage_weights
from .steplog import STEP_LOG_COLUMNS, read_step_log, write_step_log
from .trainer import ensure_compatible, supervised_loss, train_teacher

__all__ = [
    "Ablation",
    "Adam",
    "CosineGranularity",
    "DistillConfig",
    "Distiller",
    "LrSchedule",
    "Momentum",
    "Optimizer",
    "OptimizerKind",
    "PerturbationScope",
    "Projection",
    "SGD",
    "STEP_LOG_COLUMNS",
    "StepRecord",
    "build_optimizer",
    "default_layer_map",
    "distill",
    "ensure_compatible",
    "evaluate",
    "gather_negative_traces",
    "grad_norm",
    "layer_diagnostics",
    "negative_index_matrix",
    "perturbation",
    "predict",
    "prediction_losses",
    "read_step_log",
    "resolve_layer_map",
    "sample_negatives",
    "scheduled_learning_rate",
    "stage_boundary",
    "stage_of",
    "stage_weights",
    "step_objective",
    "supervised_loss",
    "train_teacher",
    "transformer_stage_loss",
    "write_step_log",
]
