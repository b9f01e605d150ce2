"""
Batched distillation objective for one step.

Traces may carry a leading batch axis. Per-sample losses are averaged over
the batch before the stage weights are applied.
"""

from typing import Sequence

import numpy as np

from lrc_distill.distiller.models import Ablation, CosineGranularity, DistillConfig
from lrc_distill.distiller.projection import Projection
from lrc_distill.distiller.schedule import default_layer_map
from lrc_distill.encoder import ForwardTrace
from lrc_distill.errors import ContractError, DimensionError
from lrc_distill.losses import (
    LossReport,
    LossWeights,
    Stage,
    combine,
    cos_nce,
    hard_loss,
    mse_layer_loss,
    regression_losses,
    soft_loss,
    weighted_total,
)
from lrc_distill.tensor import Tensor, ops


def _batch_mean(values: Tensor) -> Tensor:
    return values if values.ndim == 0 else ops.mean(values)


def _layer_cos_nce(
    projected: Tensor,
    target: Tensor,
    negatives: np.ndarray,
    granularity: CosineGranularity,
) -> Tensor:
    # projected/target: [..., l, d'], negatives: [..., K, l, d']
    if granularity is CosineGranularity.WHOLE:
        lead = projected.shape[:-2]
        width = projected.shape[-2] * projected.shape[-1]
        z_s = ops.reshape(projected, (*lead, width))
        z_t = Tensor(target.data.reshape(*lead, width))
        negs = Tensor(negatives.reshape(*lead, negatives.shape[-3], width))
    else:
        z_s, z_t = projected, target
        negs = Tensor(np.swapaxes(negatives, -3, -2))
    return _batch_mean(cos_nce(z_s, z_t, negs))


def transformer_stage_loss(
    student_trace: ForwardTrace,
    teacher_trace: ForwardTrace,
    negative_teacher_traces: Sequence[ForwardTrace] | None,
    proj: Projection,
    cfg: DistillConfig,
    layer_map: list[int] | None = None,
) -> Tensor:
    """
    Sum over student layers of the contrastive loss against the mapped teacher layer.

    Each student FFN output is projected with its W_i and flattened row-major
    before comparison (or compared per token, then averaged, with
    ``per_token_mean``). Under the ``mse-intermediate`` ablation the mean
    squared error replaces the contrastive loss and negatives are unused.

    Raises:
        ContractError: no negatives were supplied for the contrastive loss.
        DimensionError: layer map, projection and traces disagree.
    """
    m = len(student_trace.ffn_outs)
    if layer_map is None:
        layer_map = cfg.layer_map or default_layer_map(len(teacher_trace.ffn_outs), m)
    if len(layer_map) != m or len(proj) != m:
        raise DimensionError(
            f"{m} student layers, {len(layer_map)} mapped layers, {len(proj)} projections"
        )
    use_mse = cfg.ablation is Ablation.MSE_INTERMEDIATE
    if not use_mse and not negative_teacher_traces:
        raise ContractError("contrastive transformer loss needs teacher negatives")

    total: Tensor | None = None
    for i, teacher_layer in enumerate(layer_map):
        projected = ops.matmul(student_trace.ffn_outs[i], proj[i])
        target = teacher_trace.ffn_outs[teacher_layer - 1].detach()
        if use_mse:
            term = mse_layer_loss(projected, target)
        else:
            negatives = np.stack(
                [t.ffn_outs[teacher_layer - 1].data for t in negative_teacher_traces or ()],
                axis=-3,
            )
            term = _layer_cos_nce(projected, target, negatives, cfg.cosine_granularity)
        total = term if total is None else total + term
    assert total is not None
    return total


def prediction_losses(
    student_logits: Tensor,
    teacher_logits: Tensor,
    labels: np.ndarray,
    cfg: DistillConfig,
) -> tuple[Tensor, Tensor]:
    """Batch-mean soft and hard losses; squared errors for single-output heads."""
    num_classes = student_logits.shape[-1]
    if num_classes == 1:
        lead = student_logits.shape[:-1]
        y_s = ops.reshape(student_logits, lead)
        soft, hard = regression_losses(
            y_s, teacher_logits.data.reshape(lead), np.asarray(labels, dtype=np.float64)
        )
    else:
        onehot = np.eye(num_classes)[np.asarray(labels, dtype=np.int64)]
        soft = soft_loss(student_logits, teacher_logits, cfg.tau)
        hard = hard_loss(student_logits, onehot, cfg.tau, literal=cfg.hard_loss_literal)
    return _batch_mean(soft), _batch_mean(hard)


def step_objective(
    student_trace: ForwardTrace,
    teacher_trace: ForwardTrace,
    negative_teacher_traces: Sequence[ForwardTrace] | None,
    labels: np.ndarray | None,
    proj: Projection,
    cfg: DistillConfig,
    layer_map: list[int],
    weights: LossWeights,
    stage: Stage,
) -> tuple[Tensor, LossReport]:
    """
    Differentiable total for one step and its decomposition.

    Terms removed by the ablation are reported as 0. Prediction losses are
    skipped when ``labels`` is None (task-agnostic distillation).
    """
    l_transformer = None
    if cfg.ablation is not Ablation.DROP_COS_NCE:
        l_transformer = transformer_stage_loss(
            student_trace, teacher_trace, negative_teacher_traces, proj, cfg, layer_map
        )

    l_soft = l_hard = None
    if labels is not None:
        l_soft, l_hard = prediction_losses(
            student_trace.logits, teacher_trace.logits, labels, cfg
        )
        if cfg.ablation is Ablation.DROP_SOFT:
            l_soft = None
        elif cfg.ablation is Ablation.DROP_HARD:
            l_hard = None

    report = combine(
        *(term.item() if term is not None else 0.0 for term in (l_transformer, l_soft, l_hard)),
        weights,
        stage=stage,
    )
    return weighted_total(l_transformer, l_soft, l_hard, weights), report
