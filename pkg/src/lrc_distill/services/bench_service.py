import time
from pathlib import Path

import numpy as np
from loguru import logger
from pydantic import BaseModel

from lrc_distill.data import make_splits, token_matrix
from lrc_distill.encoder import EncoderConfig, EncoderModel, forward, init_params, load_checkpoint, param_count
from lrc_distill.errors import CheckpointError, ConfigError
from lrc_distill.services.models import RunConfig
from lrc_distill.services.run_service import STUDENT_DIR, RunService


class BenchResult(BaseModel):
    role: str
    parameters: int
    tokens_per_second: float


class BenchReport(BaseModel):
    teacher: BenchResult
    student: BenchResult

    @property
    def speedup(self) -> float:
        return self.student.tokens_per_second / self.teacher.tokens_per_second


def _load_or_init(path: Path, config: EncoderConfig, role: str) -> EncoderModel:
    try:
        return load_checkpoint(path)
    except CheckpointError:
        logger.info(f"No {role} checkpoint at {path}, timing a freshly initialized model")
        return init_params(config, 0)


def tokens_per_second(model: EncoderModel, ids: np.ndarray, repeats: int = 3) -> float:
    forward(model, ids[:2])  # warm-up
    start = time.perf_counter()
    for _ in range(repeats):
        forward(model, ids)
    elapsed = time.perf_counter() - start
    return repeats * ids.size / elapsed


def bench(config: RunConfig, run_service: RunService, repeats: int = 3) -> BenchReport:
    """
    Inference throughput of teacher and student on the eval split.

    Missing checkpoints are replaced by freshly initialized models of the
    configured shape; the numbers are reported, never asserted.

    Args:
        config: Run config with a ``student`` section.
        run_service: Resolves the checkpoint directories.
        repeats: Timed forward passes over the whole split per model.

    Returns:
        Parameter counts and tokens per second for both models.

    Raises:
        ConfigError: The config has no student architecture.
    """
    if config.student is None:
        raise ConfigError("bench needs a student architecture", fields=["student"])
    _, eval_split = make_splits(config.task)
    ids = token_matrix(eval_split)
    teacher = _load_or_init(run_service.teacher_dir(config), config.teacher.encoder, "teacher")
    student = _load_or_init(run_service.output_dir(config) / STUDENT_DIR, config.student, "student")

    report = BenchReport(
        teacher=BenchResult(
            role="teacher",
            parameters=param_count(teacher.config),
            tokens_per_second=tokens_per_second(teacher, ids, repeats),
        ),
        student=BenchResult(
            role="student",
            parameters=param_count(student.config),
            tokens_per_second=tokens_per_second(student, ids, repeats),
        ),
    )
    logger.info(f"Student/teacher throughput ratio {report.speedup:.2f}x")
    return report
