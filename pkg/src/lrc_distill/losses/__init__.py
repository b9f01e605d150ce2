from .losses import (
    angular_distance,
    combine,
    cos_nce,
    hard_loss,
    mse_layer_loss,
    regression_losses,
    soft_loss,
    weighted_total,
)
from .models import LossReport, LossWeights, Stage

__all__ = [
    "LossReport",
    "LossWeights",
    "Stage",
    "angular_distance",
    "combine",
    "cos_nce",
    "hard_loss",
    "mse_layer_loss",
    "regression_losses",
    "soft_loss",
    "weighted_total",
]
