from enum import StrEnum

from pydantic import BaseModel, ConfigDict, Field, model_validator


class Stage(StrEnum):
    """Training phase a step belongs to."""

    GENERAL = "general"
    STAGE1 = "stage1"
    STAGE2 = "stage2"


class LossWeights(BaseModel):
    """Weights of the total objective and the prediction-layer temperature."""

    alpha: float = Field(ge=0.0, description="Weight of the transformer-layer loss")
    beta: float = Field(ge=0.0, description="Weight of the soft prediction loss")
    gamma: float = Field(ge=0.0, description="Weight of the hard prediction loss")
    tau: float = Field(default=1.1, gt=0.0, description="Softmax temperature")

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _not_all_zero(self) -> "LossWeights":
        if self.alpha == 0.0 and self.beta == 0.0 and self.gamma == 0.0:
            raise ValueError("alpha, beta and gamma cannot all be zero")
        return self

    def as_tuple(self) -> tuple[float, float, float]:
        return self.alpha, self.beta, self.gamma


class LossReport(BaseModel):
    """Decomposition of one step's objective."""

    l_transformer: float = Field(description="Sum over distilled layers")
    l_soft: float
    l_hard: float
    l_total: float
    stage: Stage
    alpha: float
    beta: float
    gamma: float
