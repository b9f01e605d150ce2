"""
Distillation objectives.

Vector arguments are taken along the last axis; leading axes are batch axes
and every loss returns one value per leading index. Teacher-side inputs
(``z_t``, negatives, ``y_t``) are detached: no gradient reaches them.
"""

import math
from typing import Sequence

import numpy as np

from lrc_distill.errors import (
    DimensionError,
    InputError,
    NumericDomainError,
    NumericError,
    ParameterError,
)
from lrc_distill.losses.models import LossReport, LossWeights, Stage
from lrc_distill.tensor import Tensor, as_tensor, ops


def angular_distance(x: Tensor, y: Tensor) -> Tensor:
    """g(x, y) = 1 - x.y / (|x| |y|), in [0, 2]."""
    x, y = as_tensor(x), as_tensor(y)
    if x.ndim == 0 or y.ndim == 0 or x.shape[-1] != y.shape[-1] or x.shape[-1] < 1:
        raise DimensionError(f"angular_distance: incompatible shapes {x.shape}, {y.shape}")
    for label, tensor in (("x", x), ("y", y)):
        if np.any(np.linalg.norm(tensor.data, axis=-1) == 0.0):
            raise NumericDomainError(f"angular_distance: {label} has a zero-norm vector")
    cosine = ops.dot(x, y) / (ops.norm(x) * ops.norm(y))
    return 1.0 - cosine


def _stack_negatives(negatives: Tensor | Sequence[Tensor]) -> Tensor:
    if isinstance(negatives, Tensor):
        stacked = negatives.detach()
    else:
        if not negatives:
            raise ParameterError("cos_nce needs at least one negative")
        widths = {as_tensor(n).shape for n in negatives}
        if len(widths) != 1:
            raise DimensionError(f"cos_nce: negatives have mixed shapes {sorted(widths)}")
        stacked = Tensor(np.stack([as_tensor(n).data for n in negatives], axis=-2))
    if stacked.ndim < 2 or stacked.shape[-2] == 0:
        raise ParameterError("cos_nce needs at least one negative")
    return stacked


def cos_nce(
    z_s: Tensor, z_t: Tensor, negatives: Tensor | Sequence[Tensor]
) -> Tensor:
    """
    Angular contrastive loss of a student vector against its teacher vector.

    ``negatives`` is a list of K vectors or a tensor ``[..., K, D]``::

        sum_i (2 - (g(n_i, z_s) - g(z_t, z_s))) / (2K) + g(z_t, z_s)

    The value lies in [0, 4].
    """
    z_s = as_tensor(z_s)
    z_t = as_tensor(z_t).detach()
    stacked = _stack_negatives(negatives)
    if z_t.shape != z_s.shape or stacked.shape[-1] != z_s.shape[-1]:
        raise DimensionError(
            f"cos_nce: z_s {z_s.shape}, z_t {z_t.shape}, negatives {stacked.shape}"
        )
    k = stacked.shape[-2]

    positive = angular_distance(z_t, z_s)
    student = ops.reshape(z_s, (*z_s.shape[:-1], 1, z_s.shape[-1]))
    negative = angular_distance(stacked, student)
    margin = ops.sum(
        2.0 - (negative - ops.reshape(positive, (*positive.shape, 1))), axis=-1
    )
    return margin * (1.0 / (2.0 * k)) + positive


def soft_loss(y_s: Tensor, y_t: Tensor, tau: float) -> Tensor:
    """KL(softmax(y_t / tau) || softmax(y_s / tau)) summed over classes."""
    if not tau > 0.0:
        raise ParameterError(f"tau must be > 0, got {tau}")
    y_s, y_t = as_tensor(y_s), as_tensor(y_t).detach()
    if y_s.shape != y_t.shape:
        raise DimensionError(f"soft_loss: shapes {y_s.shape} and {y_t.shape} differ")
    if y_s.shape[-1] < 2:
        raise DimensionError("soft_loss needs at least two classes")
    log_target = ops.log_softmax(y_t, tau).data
    target = np.exp(log_target)
    return ops.sum(target * (log_target - ops.log_softmax(y_s, tau)), axis=-1)


def _validate_one_hot(y_onehot: np.ndarray) -> None:
    is_binary = np.all((y_onehot == 0.0) | (y_onehot == 1.0))
    if not is_binary or np.any(y_onehot.sum(axis=-1) != 1.0):
        raise InputError("hard_loss: label must be one-hot (a single 1, rest 0)")


def hard_loss(
    y_s: Tensor,
    y_onehot: Tensor | np.ndarray | Sequence[float],
    tau: float,
    *,
    literal: bool = True,
) -> Tensor:
    """
    Cross-entropy of softmax(y_s) against the label distribution.

    With ``literal`` the target is softmax(one_hot / tau), a smoothed label;
    otherwise it is the raw one-hot vector. The student term carries no
    temperature.
    """
    if not tau > 0.0:
        raise ParameterError(f"tau must be > 0, got {tau}")
    y_s = as_tensor(y_s)
    labels = np.asarray(as_tensor(y_onehot).data, dtype=np.float64)
    if labels.shape != y_s.shape:
        raise DimensionError(f"hard_loss: shapes {y_s.shape} and {labels.shape} differ")
    _validate_one_hot(labels)
    target = ops.softmax(Tensor(labels), tau).data if literal else labels
    return -ops.sum(target * ops.log_softmax(y_s), axis=-1)


def regression_losses(
    y_s: Tensor, y_t: Tensor | float, y: Tensor | float
) -> tuple[Tensor, Tensor]:
    """Squared-error replacements of the soft and hard losses."""
    y_s = as_tensor(y_s)
    teacher = as_tensor(y_t).detach()
    label = as_tensor(y).detach()
    return ops.square(y_s - teacher), ops.square(y_s - label)


def mse_layer_loss(h_s_proj: Tensor, h_t: Tensor) -> Tensor:
    """Mean squared element difference; the Euclidean intermediate-layer baseline."""
    h_s_proj, h_t = as_tensor(h_s_proj), as_tensor(h_t).detach()
    if h_s_proj.shape != h_t.shape:
        raise DimensionError(
            f"mse_layer_loss: shapes {h_s_proj.shape} and {h_t.shape} differ"
        )
    return ops.mean(ops.square(h_s_proj - h_t))


def weighted_total(
    l_transformer: Tensor | None,
    l_soft: Tensor | None,
    l_hard: Tensor | None,
    weights: LossWeights,
) -> Tensor:
    """Differentiable alpha*L_T + beta*L_soft + gamma*L_hard over the present terms."""
    total: Tensor | None = None
    for term, weight in (
        (l_transformer, weights.alpha),
        (l_soft, weights.beta),
        (l_hard, weights.gamma),
    ):
        if term is None or weight == 0.0:
            continue
        scaled = term * weight
        total = scaled if total is None else total + scaled
    if total is None:
        raise ParameterError("objective has no active term")
    return total


def combine(
    l_transformer: float,
    l_soft: float,
    l_hard: float,
    w: LossWeights,
    stage: Stage = Stage.STAGE2,
) -> LossReport:
    for name, value in (
        ("l_transformer", l_transformer),
        ("l_soft", l_soft),
        ("l_hard", l_hard),
    ):
        if not math.isfinite(value):
            raise NumericError(name, value)
    return LossReport(
        l_transformer=l_transformer,
        l_soft=l_soft,
        l_hard=l_hard,
        l_total=w.alpha * l_transformer + w.beta * l_soft + w.gamma * l_hard,
        stage=stage,
        alpha=w.alpha,
        beta=w.beta,
        gamma=w.gamma,
    )
