import itertools
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np
from loguru import logger

from lrc_distill.data import Sample, make_splits
from lrc_distill.distiller import (
    Ablation,
    Distiller,
    StepRecord,
    evaluate,
    layer_diagnostics,
    train_teacher,
    write_step_log,
)
from lrc_distill.encoder import EncoderModel, load_checkpoint, save_checkpoint
from lrc_distill.errors import CheckpointError, ConfigError
from lrc_distill.losses import Stage
from lrc_distill.services.config import apply_overrides, write_manifest
from lrc_distill.services.models import RunConfig, RunKind, RunManifest, SweepReport
from lrc_distill.settings import RuntimeSettings

TEACHER_DIR = "teacher"
STUDENT_DIR = "student"
MANIFEST_NAME = "manifest.json"
STEP_LOG_NAME = "steps.csv"
METRICS_NAME = "metrics.json"

Weights = tuple[float, float, float]


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def weights_label(weights: Weights) -> str:
    return "w" + "-".join(f"{w:g}" for w in weights)


def stage2_weight_grid(values: Sequence[float]) -> list[Weights]:
    """
    Every (alpha, beta, gamma) triple over ``values``.

    Example:
        >>> stage2_weight_grid([1, 2])[:3]
        [(1, 1, 1), (1, 1, 2), (1, 2, 1)]
    """
    return list(itertools.product(values, repeat=3))


def stage2_loss_std(records: Sequence[StepRecord]) -> float:
    """Spread of the optimized loss over second-stage steps."""
    values = [
        r.perturbed_loss if r.perturbed_loss is not None else r.loss_report.l_total
        for r in records
        if r.stage is Stage.STAGE2
    ]
    return float(np.std(values)) if values else 0.0


class RunService:
    """Runs the teacher-training, distillation, evaluation and sweep workflows."""

    def __init__(self, runtime: RuntimeSettings) -> None:
        self._runtime = runtime

    # ------------------------------------------------------------------
    # Paths
    # ------------------------------------------------------------------
    def output_dir(self, config: RunConfig) -> Path:
        return config.output_dir or self._runtime.runs_dir / config.task.name

    def teacher_dir(self, config: RunConfig) -> Path:
        return config.teacher_checkpoint or self.output_dir(config) / TEACHER_DIR

    def load_teacher(self, config: RunConfig) -> EncoderModel:
        directory = self.teacher_dir(config)
        teacher = load_checkpoint(directory)
        if teacher.config != config.teacher.encoder:
            logger.warning(
                f"Teacher checkpoint {directory} differs from teacher.encoder in the config; "
                "using the checkpoint"
            )
        return teacher

    # ------------------------------------------------------------------
    # Workflows
    # ------------------------------------------------------------------
    def train_teacher(self, config: RunConfig) -> RunManifest:
        """
        Train, checkpoint and evaluate the teacher.

        Trains from scratch on the task's training split, writes the
        checkpoint to the teacher directory and scores it on the eval split.

        Args:
            config: Run config; only ``task`` and ``teacher`` are read.

        Returns:
            Manifest with the eval metrics, also written next to the checkpoint.

        Raises:
            DivergenceError: The training loss became non-finite.
            CheckpointError: The checkpoint could not be written.
        """
        started, clock = _now(), time.perf_counter()
        train, eval_split = make_splits(config.task)
        logger.debug(f"Teacher data: {len(train)} train / {len(eval_split)} eval samples")
        training = config.teacher
        teacher = train_teacher(
            training.encoder,
            config.task,
            training.steps,
            training.seed,
            batch_size=training.batch_size,
            optimizer=training.optimizer,
            learning_rate=training.learning_rate,
            lr_schedule=training.lr_schedule,
            warmup_steps=training.warmup_steps,
            train_samples=train,
        )
        directory = save_checkpoint(teacher, self.teacher_dir(config))
        metrics = evaluate(teacher, eval_split)
        wall = time.perf_counter() - clock

        manifest = RunManifest(
            kind=RunKind.TRAIN_TEACHER,
            run_name=f"{config.task.name}-teacher",
            config=config,
            artifacts={"checkpoint": str(directory)},
            started_at=started,
            wall_seconds=wall,
            seconds_per_step=wall / training.steps if training.steps else None,
            metrics=metrics,
        )
        manifest.artifacts["manifest"] = str(write_manifest(manifest, directory / MANIFEST_NAME))
        logger.success(f"Teacher ready: {metrics}")
        return manifest

    def distill(
        self,
        config: RunConfig,
        *,
        teacher: EncoderModel | None = None,
        splits: tuple[list[Sample], list[Sample]] | None = None,
        run_name: str | None = None,
    ) -> RunManifest:
        """
        Distill the configured student from the teacher checkpoint.

        Writes the student checkpoint, the per-step CSV log and a manifest
        holding the eval metrics, teacher agreement and per-layer
        diagnostics.

        Args:
            config: Run config with a ``student`` section.
            teacher: Already loaded teacher; read from the checkpoint when omitted.
            splits: Precomputed (train, eval) samples, shared across sweep runs.
            run_name: Output subdirectory and manifest name; ``student`` by default.

        Returns:
            The distillation manifest.

        Raises:
            ConfigError: No student architecture, or one the teacher cannot drive.
            CheckpointError: The teacher checkpoint is missing or unreadable.
            DivergenceError: A step produced a non-finite objective.
        """
        if config.student is None:
            raise ConfigError("distillation needs a student architecture", fields=["student"])
        started, clock = _now(), time.perf_counter()
        teacher = teacher or self.load_teacher(config)
        train, eval_split = splits or make_splits(config.task)

        distiller = Distiller.create(
            teacher, config.student, config.distill, workers=self._runtime.teacher_workers
        )
        records = distiller.run(config.task, train)

        # Artifacts first, then metrics on held-out data
        out = self.output_dir(config) / (run_name or STUDENT_DIR)
        checkpoint = save_checkpoint(distiller.student, out)
        step_log = write_step_log(records, out / STEP_LOG_NAME)

        logger.debug(f"Scoring student {out.name} on {len(eval_split)} eval samples")
        metrics = evaluate(distiller.student, eval_split, reference=teacher)
        metrics.update(
            layer_diagnostics(
                distiller.student, teacher, distiller.projection, distiller.layer_map, eval_split
            )
        )
        metrics["stage2_loss_std"] = stage2_loss_std(records)
        metrics["final_l_total"] = records[-1].loss_report.l_total
        wall = time.perf_counter() - clock

        manifest = RunManifest(
            kind=RunKind.DISTILL,
            run_name=run_name or f"{config.task.name}-{config.distill.ablation.value}",
            config=config,
            artifacts={"checkpoint": str(checkpoint), "step_log": str(step_log)},
            started_at=started,
            wall_seconds=wall,
            seconds_per_step=wall / len(records),
            metrics=metrics,
        )
        manifest.artifacts["manifest"] = str(write_manifest(manifest, out / MANIFEST_NAME))
        return manifest

    def evaluate(
        self,
        config: RunConfig,
        checkpoint: Path | None = None,
        reference: Path | None = None,
    ) -> RunManifest:
        """
        Score a checkpoint (the student by default) on the eval split.

        Args:
            config: Run config providing the task and the default paths.
            checkpoint: Model directory to score.
            reference: Optional model whose predictions define ``agreement``.

        Returns:
            Manifest written as ``metrics.json`` inside the checkpoint directory.
        """
        started, clock = _now(), time.perf_counter()
        directory = checkpoint or self.output_dir(config) / STUDENT_DIR
        model = load_checkpoint(directory)
        reference_model = load_checkpoint(reference) if reference else None
        _, eval_split = make_splits(config.task)
        metrics = evaluate(model, eval_split, reference=reference_model)

        manifest = RunManifest(
            kind=RunKind.EVAL,
            run_name=f"{config.task.name}-eval-{directory.name}",
            config=config,
            artifacts={"checkpoint": str(directory)},
            started_at=started,
            wall_seconds=time.perf_counter() - clock,
            metrics=metrics,
        )
        manifest.artifacts["metrics"] = str(write_manifest(manifest, directory / METRICS_NAME))
        return manifest

    def ensure_teacher(self, config: RunConfig) -> EncoderModel:
        """Load the teacher checkpoint, training it first when absent."""
        try:
            return self.load_teacher(config)
        except CheckpointError:
            if config.teacher_checkpoint is not None:
                raise
            logger.info("No teacher checkpoint yet, training one")
            self.train_teacher(config)
            return self.load_teacher(config)

    def sweep(
        self,
        config: RunConfig,
        *,
        ablations: Sequence[Ablation] = (Ablation.FULL, Ablation.DROP_COS_NCE),
        seeds: Sequence[int] = (0, 1, 2),
        stage_splits: Sequence[float] | None = None,
        stage2_weights: Sequence[Weights] | None = None,
    ) -> SweepReport:
        """
        Distill one student per grid point and seed against a shared teacher.

        The grid is the ablation list by default. ``stage_splits`` sweeps the
        stage boundary instead and ``stage2_weights`` the second-stage
        (alpha, beta, gamma) triples; at most one of the two may be given.

        Args:
            config: Base run; every grid point overrides one distill field.
            ablations: Variants swept when no other grid is given.
            seeds: Distillation seeds run for every grid point.
            stage_splits: Fractions of the run spent in the first stage.
            stage2_weights: Loss-weight triples for the second stage.

        Returns:
            The manifests in grid-then-seed order. When both ``full`` and
            ``drop-cosnce`` are swept, the report also counts the seeds on
            which the full pipeline reached higher teacher agreement.

        Raises:
            ConfigError: Both alternative grids were requested, or a grid
                point produces an invalid config.
        """
        if stage_splits and stage2_weights:
            raise ConfigError(
                "sweep either stage splits or stage-2 weights, not both",
                fields=["distill.stage_split", "distill.stage2_weights"],
            )
        variants: list[tuple[str, dict[str, object]]]
        if stage_splits:
            variants = [(f"split{s:g}", {"distill.stage_split": s}) for s in stage_splits]
        elif stage2_weights:
            variants = [
                (weights_label(w), {"distill.stage2_weights": list(w)}) for w in stage2_weights
            ]
        else:
            variants = [(a.value, {"distill.ablation": a.value}) for a in ablations]

        # every grid point is validated before the teacher is loaded or trained
        grid = {
            (label, seed): apply_overrides(config, {**override, "distill.seed": seed})
            for label, override in variants
            for seed in seeds
        }
        teacher = self.ensure_teacher(config)
        splits = make_splits(config.task)

        manifests: list[RunManifest] = []
        agreement: dict[tuple[str, int], float] = {}
        for (label, seed), run_config in grid.items():
            name = f"{label}-seed{seed}"
            logger.info(f"Sweep run {name}")
            manifest = self.distill(run_config, teacher=teacher, splits=splits, run_name=name)
            manifests.append(manifest)
            agreement[(label, seed)] = manifest.metrics.get("agreement", float("nan"))

        full, dropped = Ablation.FULL.value, Ablation.DROP_COS_NCE.value
        swept_ablations = not stage_splits and not stage2_weights
        if swept_ablations and {full, dropped} <= {label for label, _ in variants}:
            wins = sum(agreement[(full, s)] > agreement[(dropped, s)] for s in seeds)
            logger.info(f"Full beat drop-cosnce on {wins}/{len(seeds)} seeds")
            return SweepReport(manifests=manifests, direction_wins=wins, direction_seeds=len(seeds))
        return SweepReport(manifests=manifests)
