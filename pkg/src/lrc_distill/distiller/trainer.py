import math
from typing import Sequence

import numpy as np
from loguru import logger

from lrc_distill.data import Sample, TaskSpec, endless_batches, label_array, make_splits, token_matrix
from lrc_distill.distiller.models import LrSchedule, OptimizerKind
from lrc_distill.distiller.optim import build_optimizer, scheduled_learning_rate
from lrc_distill.encoder import EncoderConfig, EncoderModel, forward, init_params
from lrc_distill.errors import ConfigError, DivergenceError
from lrc_distill.losses import hard_loss
from lrc_distill.tensor import Tape, Tensor, ops

LOG_EVERY = 250


def ensure_compatible(config: EncoderConfig, task: TaskSpec, role: str = "model") -> None:
    """Reject encoder shapes that cannot consume the task's sequences or labels."""
    problems: list[str] = []
    if config.vocab_size < task.vocab_size:
        problems.append(f"{role}.vocab_size={config.vocab_size} < task vocab {task.vocab_size}")
    if config.max_len < task.seq_len:
        problems.append(f"{role}.max_len={config.max_len} < task seq_len {task.seq_len}")
    if config.num_classes != task.num_classes:
        problems.append(
            f"{role}.num_classes={config.num_classes} != task num_classes {task.num_classes}"
        )
    if problems:
        raise ConfigError("; ".join(problems), fields=[p.split("=")[0] for p in problems])


def supervised_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Plain cross-entropy, or squared error for a single-output head."""
    if logits.shape[-1] == 1:
        predictions = ops.reshape(logits, logits.shape[:-1])
        return ops.mean(ops.square(predictions - labels))
    onehot = np.eye(logits.shape[-1])[labels.astype(np.int64)]
    return ops.mean(hard_loss(logits, onehot, 1.0, literal=False))


def train_teacher(
    config: EncoderConfig,
    task: TaskSpec,
    steps: int,
    seed: int,
    *,
    batch_size: int = 16,
    optimizer: OptimizerKind = OptimizerKind.ADAM,
    learning_rate: float = 1e-3,
    lr_schedule: LrSchedule = LrSchedule.CONSTANT,
    warmup_steps: int = 0,
    train_samples: Sequence[Sample] | None = None,
) -> EncoderModel:
    """
    Train a teacher encoder from scratch on the task's training split.

    Args:
        config: Teacher architecture.
        task: Synthetic task providing the data.
        steps: Number of optimizer updates; 0 returns the initialized model.
        seed: Drives both initialization and batch order.
        batch_size: Samples per update.
        optimizer: Update rule.
        learning_rate: Peak learning rate.
        lr_schedule: Constant, or cosine decay after the warmup.
        warmup_steps: Linear warmup length.
        train_samples: Training split; generated from ``task`` when omitted.

    Returns:
        The trained model.

    Raises:
        DivergenceError: The loss became non-finite.
    """
    ensure_compatible(config, task, role="teacher")
    model = init_params(config, seed)
    if steps == 0:
        return model
    if train_samples is None:
        train_samples, _ = make_splits(task)

    opt = build_optimizer(optimizer, model.parameters(), learning_rate)
    stream = endless_batches(train_samples, batch_size, seed)
    logger.info(
        "Training teacher task={task} layers={layers} hidden={hidden} steps={steps}",
        task=task.name,
        layers=config.num_layers,
        hidden=config.hidden_size,
        steps=steps,
    )

    running = 0.0
    for step in range(steps):
        batch = next(stream)
        opt.learning_rate = scheduled_learning_rate(
            learning_rate, step, steps, lr_schedule, warmup_steps
        )
        with Tape() as tape:
            loss = supervised_loss(forward(model, token_matrix(batch)).logits, label_array(batch))
        value = loss.item()
        if not math.isfinite(value):
            raise DivergenceError(step, value)

        opt.zero_grad()
        tape.backward(loss, leaves=model.parameters())
        opt.step()

        running += value
        if (step + 1) % LOG_EVERY == 0:
            logger.debug(
                f"Teacher step {step + 1}/{steps} mean_loss={running / LOG_EVERY:.5f} "
                f"lr={opt.learning_rate:.2e}"
            )
            running = 0.0

    logger.success(f"Teacher training finished after {steps} steps")
    return model
