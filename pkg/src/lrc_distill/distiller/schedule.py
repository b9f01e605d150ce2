import math

from lrc_distill.distiller.models import Ablation, DistillConfig
from lrc_distill.errors import ConfigError
from lrc_distill.losses import LossWeights, Stage

STAGE1_WEIGHTS = (1.0, 0.0, 0.0)


def default_layer_map(n: int, m: int) -> list[int]:
    """
    Uniform-skip mapping: student layer i imitates teacher layer (i+1)*N/M.

    Teacher layers are 1-indexed.
    """
    if not n >= m >= 1:
        raise ConfigError(f"layer mapping needs N >= M >= 1, got N={n} M={m}")
    if n % m != 0:
        raise ConfigError(
            f"teacher depth {n} is not a multiple of student depth {m}; "
            "supply distill.layer_map explicitly",
            fields=["distill.layer_map"],
        )
    return [(i + 1) * n // m for i in range(m)]


def resolve_layer_map(cfg: DistillConfig, n: int, m: int) -> list[int]:
    """Configured map validated against the model depths, or the default."""
    if cfg.layer_map is None:
        return default_layer_map(n, m)
    layer_map = list(cfg.layer_map)
    if len(layer_map) != m:
        raise ConfigError(
            f"layer_map has {len(layer_map)} entries but the student has {m} layers",
            fields=["distill.layer_map"],
        )
    if layer_map[-1] > n:
        raise ConfigError(
            f"layer_map references teacher layer {layer_map[-1]} but the teacher "
            f"has {n}",
            fields=["distill.layer_map"],
        )
    return layer_map


def stage_boundary(cfg: DistillConfig) -> int:
    """First task step that belongs to the second stage."""
    if cfg.ablation in (Ablation.NO_TWO_STAGE, Ablation.DROP_COS_NCE):
        return 0
    return math.floor(cfg.stage_split * cfg.total_steps)


def stage_of(step: int, cfg: DistillConfig) -> Stage:
    return Stage.STAGE1 if step < stage_boundary(cfg) else Stage.STAGE2


def _drop_ablated(weights: tuple[float, float, float], ablation: Ablation) -> tuple[float, float, float]:
    alpha, beta, gamma = weights
    if ablation is Ablation.DROP_COS_NCE:
        alpha = 0.0
    elif ablation is Ablation.DROP_SOFT:
        beta = 0.0
    elif ablation is Ablation.DROP_HARD:
        gamma = 0.0
    return alpha, beta, gamma


def stage_weights(step: int, cfg: DistillConfig) -> LossWeights:
    """
    (1, 0, 0) during the first stage, ``stage2_weights`` afterwards.

    The switch happens at floor(stage_split * total_steps). Ablations that
    drop a term zero its weight; dropping the contrastive term leaves the
    first stage empty, so that variant starts in the second stage.
    """
    if not 0 <= step < cfg.total_steps:
        raise ConfigError(f"step {step} outside [0, {cfg.total_steps})")
    raw = STAGE1_WEIGHTS if stage_of(step, cfg) is Stage.STAGE1 else cfg.stage2_weights
    alpha, beta, gamma = _drop_ablated(raw, cfg.ablation)
    return LossWeights(alpha=alpha, beta=beta, gamma=gamma, tau=cfg.tau)


def general_weights(cfg: DistillConfig) -> LossWeights:
    return LossWeights(alpha=1.0, beta=0.0, gamma=0.0, tau=cfg.tau)
