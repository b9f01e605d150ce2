from enum import StrEnum

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from lrc_distill.losses import LossReport, Stage


class Ablation(StrEnum):
    """Pipeline variants used by the ablation studies."""

    FULL = "full"
    DROP_COS_NCE = "drop-cosnce"
    DROP_SOFT = "drop-soft"
    DROP_HARD = "drop-hard"
    MSE_INTERMEDIATE = "mse-intermediate"
    NO_TWO_STAGE = "no-two-stage"
    NO_PERTURBATION = "no-perturbation"


class CosineGranularity(StrEnum):
    WHOLE = "whole"
    PER_TOKEN_MEAN = "per_token_mean"


class PerturbationScope(StrEnum):
    SAMPLE = "sample"
    TOKEN = "token"


class OptimizerKind(StrEnum):
    SGD = "sgd"
    MOMENTUM = "momentum"
    ADAM = "adam"


class LrSchedule(StrEnum):
    CONSTANT = "constant"
    COSINE = "cosine"


class DistillConfig(BaseModel):
    """Hyperparameters of the contrastive distillation pipeline."""

    layer_map: list[int] | None = Field(
        default=None,
        description="Teacher layer (1-indexed) imitated by each student layer; "
        "uniform skip when omitted",
    )
    num_negatives: int = Field(default=15, ge=1, description="K negatives per sample")
    batch_size: int = Field(default=16, ge=2)
    tau: float = Field(default=1.1, gt=0.0)
    stage_split: float = Field(default=0.8, ge=0.0, le=1.0)
    stage2_weights: tuple[float, float, float] = (1.0, 1.0, 3.0)
    perturbation_enabled: bool = True
    perturbation_scope: PerturbationScope = PerturbationScope.SAMPLE
    ablation: Ablation = Ablation.FULL
    cosine_granularity: CosineGranularity = CosineGranularity.WHOLE
    hard_loss_literal: bool = True
    optimizer: OptimizerKind = OptimizerKind.SGD
    learning_rate: float = Field(default=0.05, gt=0.0)
    lr_schedule: LrSchedule = LrSchedule.CONSTANT
    warmup_steps: int = Field(default=0, ge=0, description="Linear warmup over the first task steps")
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    total_steps: int = Field(default=1000, ge=1)
    general_steps: int = Field(
        default=0, ge=0, description="Task-agnostic transformer-layer steps run first"
    )
    seed: int = 0

    model_config = ConfigDict(extra="forbid", frozen=True)

    @field_validator("layer_map")
    @classmethod
    def _strictly_increasing(cls, value: list[int] | None) -> list[int] | None:
        if value is None:
            return None
        if not value:
            raise ValueError("layer_map cannot be empty")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError(f"layer_map must be strictly increasing, got {value}")
        if value[0] < 1:
            raise ValueError("layer_map entries are 1-indexed teacher layers")
        return value

    @field_validator("stage2_weights")
    @classmethod
    def _non_negative(
        cls, value: tuple[float, float, float]
    ) -> tuple[float, float, float]:
        if any(w < 0.0 for w in value) or not any(w > 0.0 for w in value):
            raise ValueError("stage2_weights must be non-negative and not all zero")
        return value

    @model_validator(mode="after")
    def _negatives_fit_batch(self) -> "DistillConfig":
        if self.num_negatives >= self.batch_size:
            raise ValueError(
                f"num_negatives={self.num_negatives} must be < batch_size="
                f"{self.batch_size}"
            )
        return self

    @model_validator(mode="after")
    def _ablation_leaves_a_term(self) -> "DistillConfig":
        dropped = {
            Ablation.DROP_COS_NCE: 0,
            Ablation.DROP_SOFT: 1,
            Ablation.DROP_HARD: 2,
        }.get(self.ablation)
        remaining = [w for i, w in enumerate(self.stage2_weights) if i != dropped]
        if not any(w > 0.0 for w in remaining):
            raise ValueError(
                f"ablation {self.ablation.value} zeroes every stage2_weights term "
                f"{self.stage2_weights}"
            )
        return self

    @property
    def perturbation_active(self) -> bool:
        return self.perturbation_enabled and self.ablation is not Ablation.NO_PERTURBATION

    @property
    def uses_cos_nce(self) -> bool:
        return self.ablation not in (Ablation.DROP_COS_NCE, Ablation.MSE_INTERMEDIATE)


class StepRecord(BaseModel):
    """Log entry of one optimizer update."""

    step: int = Field(ge=0)
    stage: Stage
    loss_report: LossReport
    perturbed_loss: float | None = Field(
        default=None, description="Objective after the gradient perturbation"
    )
    grad_norm: float = Field(ge=0.0)
    perturbation_norms: list[float] = Field(
        default_factory=list,
        description="Frobenius norm of each applied per-sample perturbation",
    )
    skipped_perturbations: int = Field(
        default=0, ge=0, description="Samples whose embedding gradient was zero"
    )
