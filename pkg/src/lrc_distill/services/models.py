from enum import StrEnum
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, model_validator

from lrc_distill.data import TaskSpec
from lrc_distill.distiller import DistillConfig, LrSchedule, OptimizerKind
from lrc_distill.encoder import EncoderConfig


class TeacherTrainingConfig(BaseModel):
    """Architecture and optimizer settings for training the teacher from scratch."""

    encoder: EncoderConfig
    steps: int = Field(default=3000, ge=0)
    batch_size: int = Field(default=16, ge=2)
    learning_rate: float = Field(default=1e-3, gt=0.0)
    lr_schedule: LrSchedule = LrSchedule.CONSTANT
    warmup_steps: int = Field(default=0, ge=0)
    optimizer: OptimizerKind = OptimizerKind.ADAM
    seed: int = 0

    model_config = ConfigDict(extra="forbid", frozen=True)


class RunConfig(BaseModel):
    """
    Declarative description of one experiment.

    Everything that influences numerical results lives here, so a manifest
    embedding this snapshot can be replayed.
    """

    task: TaskSpec
    teacher: TeacherTrainingConfig
    student: EncoderConfig | None = Field(
        default=None, description="Student architecture; required for distillation"
    )
    distill: DistillConfig = Field(default_factory=DistillConfig)
    output_dir: Path | None = Field(
        default=None, description="Artifact root; defaults to <runs_dir>/<task.name>"
    )
    teacher_checkpoint: Path | None = Field(
        default=None, description="Existing teacher; defaults to <output_dir>/teacher"
    )

    model_config = ConfigDict(extra="forbid", frozen=True)

    @model_validator(mode="after")
    def _shapes_match_task(self) -> "RunConfig":
        for role, encoder in (("teacher.encoder", self.teacher.encoder), ("student", self.student)):
            if encoder is None:
                continue
            if encoder.num_classes != self.task.num_classes:
                raise ValueError(
                    f"{role}.num_classes={encoder.num_classes} does not match "
                    f"task.num_classes={self.task.num_classes}"
                )
            if encoder.vocab_size < self.task.vocab_size or encoder.max_len < self.task.seq_len:
                raise ValueError(f"{role} cannot embed the task's vocabulary or length")
        return self


class RunKind(StrEnum):
    TRAIN_TEACHER = "train-teacher"
    DISTILL = "distill"
    EVAL = "eval"


class RunManifest(BaseModel):
    """Record of a finished command: config snapshot, artifacts, timings, metrics."""

    kind: RunKind
    run_name: str
    config: RunConfig
    artifacts: dict[str, str] = Field(default_factory=dict)
    started_at: str = Field(description="UTC ISO-8601 start time")
    wall_seconds: float = Field(ge=0.0)
    seconds_per_step: float | None = None
    metrics: dict[str, float] = Field(default_factory=dict)

    @property
    def task_name(self) -> str:
        return self.config.task.name


class GradCheckScope(StrEnum):
    LOSSES = "losses"
    ENCODER = "encoder"
    END2END = "end2end"


class SweepReport(BaseModel):
    """Outcome of an ablation, stage-split or stage-2 weight sweep."""

    manifests: list[RunManifest]
    direction_wins: int | None = Field(
        default=None, description="Seeds on which full beat drop-cosnce on agreement"
    )
    direction_seeds: int | None = None

    @property
    def direction_passed(self) -> bool | None:
        if self.direction_wins is None or not self.direction_seeds:
            return None
        return self.direction_wins * 2 > self.direction_seeds

    def best(self, metric: str) -> RunManifest | None:
        """Run with the highest ``metric``; runs that lack it are ignored."""
        scored = [m for m in self.manifests if metric in m.metrics]
        return max(scored, key=lambda m: m.metrics[metric], default=None)
