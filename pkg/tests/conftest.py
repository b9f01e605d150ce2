from pathlib import Path

import numpy as np
import pytest

from lrc_distill.data import TaskKind, TaskSpec, make_splits
from lrc_distill.distiller import DistillConfig
from lrc_distill.encoder import EncoderConfig, EncoderModel, init_params
from lrc_distill.services import RunConfig, RunService, TeacherTrainingConfig
from lrc_distill.settings import RuntimeSettings


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def parity_task() -> TaskSpec:
    """Short parity task: 9 content bits leave 256 distinct sequences per label."""
    return TaskSpec(
        name="parity",
        kind=TaskKind.SINGLE_CLASSIFY,
        vocab_size=5,
        seq_len=10,
        num_classes=2,
        n_train=96,
        n_eval=32,
    )


@pytest.fixture
def parity_splits(parity_task: TaskSpec):
    return make_splits(parity_task)


@pytest.fixture
def teacher_config() -> EncoderConfig:
    return EncoderConfig(
        vocab_size=5, max_len=10, num_layers=2, hidden_size=8, num_heads=2, ffn_size=16, num_classes=2
    )


@pytest.fixture
def student_config() -> EncoderConfig:
    return EncoderConfig(
        vocab_size=5, max_len=10, num_layers=1, hidden_size=4, num_heads=2, ffn_size=8, num_classes=2
    )


@pytest.fixture
def teacher(teacher_config: EncoderConfig) -> EncoderModel:
    """Untrained but fixed teacher; distillation only needs it frozen."""
    return init_params(teacher_config, seed=7)


@pytest.fixture
def distill_config() -> DistillConfig:
    return DistillConfig(
        num_negatives=3,
        batch_size=4,
        total_steps=6,
        stage_split=0.5,
        optimizer="adam",
        learning_rate=1e-2,
        seed=0,
    )


@pytest.fixture
def run_config(
    tmp_path: Path,
    parity_task: TaskSpec,
    teacher_config: EncoderConfig,
    student_config: EncoderConfig,
    distill_config: DistillConfig,
) -> RunConfig:
    return RunConfig(
        task=parity_task,
        teacher=TeacherTrainingConfig(encoder=teacher_config, steps=5, batch_size=8),
        student=student_config,
        distill=distill_config,
        output_dir=tmp_path / "run",
    )


@pytest.fixture
def run_service(tmp_path: Path) -> RunService:
    return RunService(RuntimeSettings(runs_dir=tmp_path / "runs"))
