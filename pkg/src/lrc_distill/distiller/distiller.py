import math
from concurrent.futures import ThreadPoolExecutor
from typing import Iterator, Sequence

import numpy as np
from loguru import logger

from lrc_distill.data import (
    Sample,
    TaskSpec,
    endless_batches,
    label_array,
    make_splits,
    random_sequences,
    token_matrix,
)
from lrc_distill.distiller.models import Ablation, DistillConfig, PerturbationScope, StepRecord
from lrc_distill.distiller.negatives import gather_negative_traces, negative_index_matrix
from lrc_distill.distiller.objective import step_objective
from lrc_distill.distiller.optim import (
    Optimizer,
    build_optimizer,
    grad_norm,
    scheduled_learning_rate,
)
from lrc_distill.distiller.projection import Projection
from lrc_distill.distiller.schedule import (
    general_weights,
    resolve_layer_map,
    stage_boundary,
    stage_of,
    stage_weights,
)
from lrc_distill.distiller.trainer import ensure_compatible
from lrc_distill.encoder import EncoderConfig, EncoderModel, ForwardTrace, forward, init_params
from lrc_distill.errors import ConfigError, ContractError, DivergenceError, NumericError
from lrc_distill.losses import LossReport, LossWeights, Stage
from lrc_distill.settings import settings
from lrc_distill.tensor import Tape, Tensor

# Seed offsets keep the student init, projection init and negative draws
# on independent streams derived from one config seed.
_PROJECTION_SEED = 1
_NEGATIVE_SEED = 2
_GENERAL_DATA_SEED = 3


def _concat_traces(parts: Sequence[ForwardTrace]) -> ForwardTrace:
    if len(parts) == 1:
        return parts[0]
    return ForwardTrace(
        emb_out=Tensor(np.concatenate([p.emb_out.data for p in parts])),
        ffn_outs=[
            Tensor(np.concatenate([p.ffn_outs[i].data for p in parts]))
            for i in range(len(parts[0].ffn_outs))
        ],
        logits=Tensor(np.concatenate([p.logits.data for p in parts])),
    )


def perturbation(
    grad: np.ndarray, scope: PerturbationScope = PerturbationScope.SAMPLE
) -> tuple[np.ndarray, list[float], int]:
    """
    Normalized embedding-gradient offset r = g / |g|.

    ``grad`` is ``[l, d]`` or ``[B, l, d]``. With the ``sample`` scope each
    sample's whole matrix is normalized to unit Frobenius norm; with
    ``token`` each row is normalized on its own. Samples whose gradient is
    exactly zero get no offset.

    Returns:
        The offset, the Frobenius norm of every applied per-sample offset and
        the number of skipped samples.
    """
    batched = grad if grad.ndim == 3 else grad[None]
    if scope is PerturbationScope.SAMPLE:
        norms = np.sqrt(np.sum(batched * batched, axis=(-2, -1), keepdims=True))
    else:
        norms = np.sqrt(np.sum(batched * batched, axis=-1, keepdims=True))
    safe = np.where(norms == 0.0, 1.0, norms)
    offset = np.where(norms == 0.0, 0.0, batched / safe)

    sample_norms = np.sqrt(np.sum(offset * offset, axis=(-2, -1)))
    zero = np.all(batched == 0.0, axis=(-2, -1))
    applied = [float(n) for n, skip in zip(sample_norms, zero) if not skip]
    return offset.reshape(grad.shape), applied, int(zero.sum())


class Distiller:
    """
    Owns one distillation run: student, projection, optimizer and schedule.

    The teacher is only ever evaluated outside a gradient tape, so its
    parameters never receive a gradient or an update.
    """

    def __init__(
        self,
        teacher: EncoderModel,
        student: EncoderModel,
        projection: Projection,
        cfg: DistillConfig,
        *,
        workers: int | None = None,
    ) -> None:
        self.teacher = teacher
        self.student = student
        self.projection = projection
        self.cfg = cfg
        self.workers = workers or settings.teacher_workers
        self.layer_map = resolve_layer_map(
            cfg, teacher.config.num_layers, student.config.num_layers
        )
        if projection.shape != (student.config.hidden_size, teacher.config.hidden_size):
            raise ConfigError(
                f"projection shape {projection.shape} does not map student width "
                f"{student.config.hidden_size} to teacher width {teacher.config.hidden_size}"
            )
        if len(projection) != student.config.num_layers:
            raise ConfigError("projection needs one matrix per student layer")
        self.optimizer: Optimizer = build_optimizer(
            cfg.optimizer, self.trainables, cfg.learning_rate, cfg.momentum
        )
        self._negative_rng = np.random.default_rng(cfg.seed + _NEGATIVE_SEED)

    @classmethod
    def create(
        cls,
        teacher: EncoderModel,
        student_config: EncoderConfig,
        cfg: DistillConfig,
        *,
        workers: int | None = None,
    ) -> "Distiller":
        """
        Build a distiller around a fresh student and projection.

        The student is initialized from ``cfg.seed`` and the projection from
        its own generator seeded with ``cfg.seed + 1``.

        Args:
            teacher: Frozen teacher; never updated.
            student_config: Student architecture sharing the teacher's vocabulary and head.
            cfg: Distillation hyperparameters.
            workers: Threads for the teacher forward; the runtime setting when omitted.

        Raises:
            ConfigError: Vocabulary, head or layer map do not fit the teacher.

        Example:
            >>> distiller = Distiller.create(teacher, student_config, DistillConfig(total_steps=10))
            >>> records = distiller.run(task, train_samples)
        """
        if student_config.vocab_size != teacher.config.vocab_size:
            raise ConfigError(
                "student and teacher must share a vocabulary",
                fields=["student.vocab_size"],
            )
        if student_config.num_classes != teacher.config.num_classes:
            raise ConfigError(
                "student and teacher must share the output head size",
                fields=["student.num_classes"],
            )
        student = init_params(student_config, cfg.seed)
        projection = Projection.init(
            student_config.num_layers,
            student_config.hidden_size,
            teacher.config.hidden_size,
            cfg.seed + _PROJECTION_SEED,
        )
        return cls(teacher, student, projection, cfg, workers=workers)

    @property
    def trainables(self) -> list[Tensor]:
        return self.student.parameters() + self.projection.parameters()

    # ------------------------------------------------------------------
    # Teacher side
    # ------------------------------------------------------------------
    def teacher_trace(self, ids: np.ndarray) -> ForwardTrace:
        """Frozen-teacher forward, split across worker threads and merged in batch order."""
        if self.workers <= 1 or ids.ndim == 1 or len(ids) < 2:
            return forward(self.teacher, ids)
        chunks = np.array_split(ids, min(self.workers, len(ids)))
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(lambda chunk: forward(self.teacher, chunk), chunks))
        return _concat_traces(parts)

    def _negatives(self, teacher: ForwardTrace, batch_size: int) -> list[ForwardTrace] | None:
        if not self.cfg.uses_cos_nce:
            return None
        if self.cfg.num_negatives >= batch_size:
            raise ConfigError(
                f"num_negatives={self.cfg.num_negatives} needs batches larger than {batch_size}",
                fields=["distill.num_negatives"],
            )
        index = negative_index_matrix(batch_size, self.cfg.num_negatives, self._negative_rng)
        return gather_negative_traces(teacher, index)

    # ------------------------------------------------------------------
    # Steps
    # ------------------------------------------------------------------
    def _update(self, tape: Tape, total: Tensor) -> float:
        self.optimizer.zero_grad()
        tape.backward(total, leaves=self.trainables)
        norm = grad_norm(self.trainables)
        self.optimizer.step()
        return norm

    def train_step(
        self,
        step: int,
        batch: Sequence[Sample],
        weights: LossWeights,
        stage: Stage,
        *,
        use_labels: bool = True,
    ) -> StepRecord:
        """One update; perturbed when the config enables it."""
        if self.cfg.perturbation_active:
            return self.perturbed_step(step, batch, weights, stage, use_labels=use_labels)
        return self.plain_step(step, batch, weights, stage, use_labels=use_labels)

    def plain_step(
        self,
        step: int,
        batch: Sequence[Sample],
        weights: LossWeights,
        stage: Stage,
        *,
        use_labels: bool = True,
    ) -> StepRecord:
        ids = token_matrix(batch)
        labels = label_array(batch) if use_labels else None
        teacher = self.teacher_trace(ids)
        negatives = self._negatives(teacher, len(batch))

        with Tape() as tape:
            trace = forward(self.student, ids)
            total, report = self._objective(step, trace, teacher, negatives, labels, weights, stage)
        norm = self._update(tape, total)
        return StepRecord(step=step, stage=stage, loss_report=report, grad_norm=norm)

    def perturbed_step(
        self,
        step: int,
        batch: Sequence[Sample],
        weights: LossWeights,
        stage: Stage,
        *,
        use_labels: bool = True,
    ) -> StepRecord:
        """
        Gradient-perturbation update.

        The objective is evaluated once to obtain its gradient with respect
        to the embedding output. That gradient, normalized per sample, is
        added to the recomputed embedding output and the objective is
        evaluated again with the same teacher traces and negatives. Every
        trainable is updated from the second evaluation only.
        """
        if not self.cfg.perturbation_active:
            raise ContractError("perturbed_step called with perturbation disabled")
        ids = token_matrix(batch)
        labels = label_array(batch) if use_labels else None
        teacher = self.teacher_trace(ids)
        negatives = self._negatives(teacher, len(batch))

        with Tape() as first:
            trace = forward(self.student, ids)
            total, report = self._objective(step, trace, teacher, negatives, labels, weights, stage)
        (emb_grad,) = first.gradient(total, [trace.emb_out])
        offset, applied, skipped = perturbation(emb_grad, self.cfg.perturbation_scope)
        if skipped:
            logger.debug(f"Step {step}: zero embedding gradient, {skipped} sample(s) not perturbed")

        with Tape() as second:
            emb = self.student.embed(ids) + Tensor(offset)
            perturbed = forward(self.student, ids, inject_emb=emb)
            perturbed_total, perturbed_report = self._objective(
                step, perturbed, teacher, negatives, labels, weights, stage
            )
        norm = self._update(second, perturbed_total)
        return StepRecord(
            step=step,
            stage=stage,
            loss_report=report,
            perturbed_loss=perturbed_report.l_total,
            grad_norm=norm,
            perturbation_norms=applied,
            skipped_perturbations=skipped,
        )

    def _objective(
        self,
        step: int,
        trace: ForwardTrace,
        teacher: ForwardTrace,
        negatives: list[ForwardTrace] | None,
        labels: np.ndarray | None,
        weights: LossWeights,
        stage: Stage,
    ) -> tuple[Tensor, LossReport]:
        try:
            total, report = step_objective(
                trace, teacher, negatives, labels, self.projection,
                self.cfg, self.layer_map, weights, stage,
            )
        except NumericError as e:
            raise DivergenceError(step, e.value) from e
        if not math.isfinite(total.item()):
            raise DivergenceError(step, total.item())
        return total, report

    # ------------------------------------------------------------------
    # Runs
    # ------------------------------------------------------------------
    def general_distill(self, task: TaskSpec) -> list[StepRecord]:
        """
        Task-agnostic phase: transformer-layer loss only, on random sequences.

        Does nothing when ``general_steps`` is 0 or the contrastive term is
        ablated away.
        """
        steps = self.cfg.general_steps
        if steps == 0 or self.cfg.ablation is Ablation.DROP_COS_NCE:
            return []
        pool = random_sequences(
            max(steps * self.cfg.batch_size, self.cfg.batch_size),
            task.seq_len,
            task.vocab_size,
            self.cfg.seed + _GENERAL_DATA_SEED,
        )
        stream = endless_batches(pool, self.cfg.batch_size, self.cfg.seed + _GENERAL_DATA_SEED)
        weights = general_weights(self.cfg)
        logger.info(f"General distillation for {steps} steps")
        return [
            self.train_step(step, next(stream), weights, Stage.GENERAL, use_labels=False)
            for step in range(steps)
        ]

    def run(self, task: TaskSpec, train_samples: Sequence[Sample]) -> list[StepRecord]:
        """
        General phase (optional) followed by ``total_steps`` task steps.

        Each task step takes the next seeded batch, looks up its stage and
        loss weights and applies one (possibly perturbed) update to the
        student and the projection.

        Args:
            task: Task the batches come from; checked against both encoders.
            train_samples: Training split.

        Returns:
            One record per update, general-phase steps first.

        Raises:
            ConfigError: The encoders cannot consume the task.
            DivergenceError: A step produced a non-finite objective.
            ContractError: The teacher changed during the run.
        """
        ensure_compatible(self.student.config, task, role="student")
        ensure_compatible(self.teacher.config, task, role="teacher")
        # Snapshot to prove the teacher stays frozen
        frozen = self.teacher.state()

        records = self.general_distill(task)
        offset = len(records)
        boundary = stage_boundary(self.cfg)
        logger.info(
            "Distilling task={task} steps={steps} layer_map={layer_map} ablation={ablation} "
            "stage2_from={boundary}",
            task=task.name,
            steps=self.cfg.total_steps,
            layer_map=self.layer_map,
            ablation=self.cfg.ablation.value,
            boundary=boundary,
        )
        stream = self._task_batches(train_samples)
        for step in range(self.cfg.total_steps):
            if step == boundary and boundary > 0:
                logger.info(f"Switching to stage 2 at step {step}")
            self.optimizer.learning_rate = scheduled_learning_rate(
                self.cfg.learning_rate,
                step,
                self.cfg.total_steps,
                self.cfg.lr_schedule,
                self.cfg.warmup_steps,
            )
            record = self.train_step(
                offset + step, next(stream), stage_weights(step, self.cfg), stage_of(step, self.cfg)
            )
            records.append(record)

        if any(
            not np.array_equal(before, self.teacher[name].data)
            for name, before in frozen.items()
        ):
            raise ContractError("teacher parameters changed during distillation")
        logger.success(
            f"Distillation finished: {len(records)} steps, final l_total="
            f"{records[-1].loss_report.l_total:.5f}"
        )
        return records

    def _task_batches(self, train_samples: Sequence[Sample]) -> Iterator[list[Sample]]:
        return endless_batches(train_samples, self.cfg.batch_size, self.cfg.seed)


def distill(
    teacher: EncoderModel,
    student_config: EncoderConfig,
    cfg: DistillConfig,
    task: TaskSpec,
    train_samples: Sequence[Sample] | None = None,
) -> tuple[EncoderModel, list[StepRecord]]:
    """
    Distill ``teacher`` into a fresh student.

    Args:
        teacher: Frozen teacher.
        student_config: Student architecture.
        cfg: Distillation hyperparameters.
        task: Task providing the data.
        train_samples: Training split; generated from ``task`` when omitted.

    Returns:
        The student and the full step log.
    """
    distiller = Distiller.create(teacher, student_config, cfg)
    if train_samples is None:
        train_samples, _ = make_splits(task)
    records = distiller.run(task, train_samples)
    return distiller.student, records
