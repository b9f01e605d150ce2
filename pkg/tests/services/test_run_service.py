import json
from pathlib import Path

import numpy as np
import pytest

from lrc_distill.distiller import Ablation, StepRecord, read_step_log
from lrc_distill.encoder import load_checkpoint
from lrc_distill.errors import CheckpointError, ConfigError
from lrc_distill.losses import LossWeights, Stage, combine
from lrc_distill.services import (
    RunKind,
    apply_overrides,
    load_manifest,
    load_run_config,
    stage2_loss_std,
    stage2_weight_grid,
    weights_label,
)


@pytest.fixture
def teacher_manifest(run_service, run_config):
    return run_service.train_teacher(run_config)


def test_train_teacher_writes_checkpoint_and_manifest(teacher_manifest, run_config):
    checkpoint = Path(teacher_manifest.artifacts["checkpoint"])
    assert checkpoint == run_config.output_dir / "teacher"
    assert load_checkpoint(checkpoint).config == run_config.teacher.encoder

    assert teacher_manifest.kind is RunKind.TRAIN_TEACHER
    assert set(teacher_manifest.metrics) == {"accuracy", "macro_f1", "f1"}
    assert teacher_manifest.seconds_per_step > 0.0
    manifest_path = Path(teacher_manifest.artifacts["manifest"])
    assert load_run_config(manifest_path) == run_config


def test_distill_writes_artifacts(teacher_manifest, run_service, run_config):
    manifest = run_service.distill(run_config)

    out = run_config.output_dir / "student"
    assert manifest.artifacts["checkpoint"] == str(out)
    assert load_checkpoint(out).config == run_config.student

    rows = read_step_log(Path(manifest.artifacts["step_log"]))
    assert len(rows) == run_config.distill.total_steps
    assert {"agreement", "accuracy", "layer1_angular", "layer1_mse", "stage2_loss_std", "final_l_total"} <= set(
        manifest.metrics
    )
    assert 0.0 <= manifest.metrics["agreement"] <= 1.0
    assert float(rows[-1]["l_total"]) == manifest.metrics["final_l_total"]
    stored = load_manifest(Path(manifest.artifacts["manifest"]))
    assert stored.metrics == manifest.metrics
    assert stored.config == run_config
    assert manifest.run_name == "parity-full"


def test_distill_replays_to_identical_step_log(teacher_manifest, run_service, run_config):
    first = run_service.distill(run_config, run_name="a")
    replayed = load_run_config(Path(first.artifacts["manifest"]))
    second = run_service.distill(replayed, run_name="b")

    assert (
        Path(first.artifacts["step_log"]).read_bytes()
        == Path(second.artifacts["step_log"]).read_bytes()
    )


def test_distill_needs_a_student(run_service, run_config):
    with pytest.raises(ConfigError) as info:
        run_service.distill(run_config.model_copy(update={"student": None}))
    assert info.value.fields == ["student"]


def test_distill_without_teacher_checkpoint_fails(run_service, run_config):
    with pytest.raises(CheckpointError):
        run_service.distill(run_config)


def test_evaluate_writes_metrics(teacher_manifest, run_service, run_config):
    run_service.distill(run_config)
    teacher_dir = run_config.output_dir / "teacher"
    manifest = run_service.evaluate(run_config, reference=teacher_dir)

    metrics_path = Path(manifest.artifacts["metrics"])
    assert metrics_path == run_config.output_dir / "student" / "metrics.json"
    assert json.loads(metrics_path.read_text())["metrics"] == manifest.metrics
    assert "agreement" in manifest.metrics

    self_check = run_service.evaluate(run_config, checkpoint=teacher_dir, reference=teacher_dir)
    assert self_check.metrics["agreement"] == 1.0


def test_ensure_teacher_trains_once(run_service, run_config):
    teacher = run_service.ensure_teacher(run_config)
    again = run_service.ensure_teacher(run_config)
    for name, value in teacher.state().items():
        np.testing.assert_array_equal(again[name].data, value)


def test_explicit_teacher_checkpoint_is_never_replaced(run_service, run_config, tmp_path):
    config = run_config.model_copy(update={"teacher_checkpoint": tmp_path / "missing"})
    with pytest.raises(CheckpointError):
        run_service.ensure_teacher(config)


def test_output_dir_defaults_under_runs_dir(run_service, run_config, tmp_path):
    config = run_config.model_copy(update={"output_dir": None})
    assert run_service.output_dir(config) == tmp_path / "runs" / "parity"


def test_ablation_sweep_counts_direction(run_service, run_config):
    config = apply_overrides(run_config, {"distill.total_steps": 2})
    report = run_service.sweep(config, seeds=(0, 1))

    assert [m.run_name for m in report.manifests] == [
        "full-seed0",
        "full-seed1",
        "drop-cosnce-seed0",
        "drop-cosnce-seed1",
    ]
    assert report.direction_seeds == 2
    assert 0 <= report.direction_wins <= 2
    assert report.direction_passed == (report.direction_wins == 2)


def test_stage_split_sweep_has_no_direction(run_service, run_config):
    config = apply_overrides(run_config, {"distill.total_steps": 2})
    report = run_service.sweep(config, ablations=[Ablation.FULL], seeds=(0,), stage_splits=[0.0, 1.0])

    assert [m.run_name for m in report.manifests] == ["split0-seed0", "split1-seed0"]
    assert report.direction_passed is None


def test_stage2_loss_std_prefers_perturbed_loss():
    weights = LossWeights(alpha=1.0, beta=1.0, gamma=3.0)

    def record(step, stage, total, perturbed):
        report = combine(total, 0.0, 0.0, weights, stage)
        return StepRecord(step=step, stage=stage, loss_report=report, perturbed_loss=perturbed, grad_norm=0.0)

    records = [
        record(0, Stage.STAGE1, 100.0, None),
        record(1, Stage.STAGE2, 1.0, 2.0),
        record(2, Stage.STAGE2, 4.0, None),
    ]
    assert stage2_loss_std(records) == pytest.approx(1.0)
    assert stage2_loss_std(records[:1]) == 0.0


def test_stage2_weight_sweep_runs_each_triple(run_service, run_config):
    config = apply_overrides(run_config, {"distill.total_steps": 2})
    report = run_service.sweep(config, seeds=(0, 1), stage2_weights=[(1.0, 1.0, 3.0), (1.0, 2.0, 3.0)])

    assert [m.run_name for m in report.manifests] == [
        "w1-1-3-seed0",
        "w1-1-3-seed1",
        "w1-2-3-seed0",
        "w1-2-3-seed1",
    ]
    assert [m.config.distill.stage2_weights for m in report.manifests[1:3]] == [(1.0, 1.0, 3.0), (1.0, 2.0, 3.0)]
    assert report.direction_passed is None
    best = report.best("agreement")
    assert best.metrics["agreement"] == max(m.metrics["agreement"] for m in report.manifests)


def test_weight_grid_covers_every_triple():
    grid = stage2_weight_grid([1, 2, 3, 4])
    assert len(grid) == 64 == len(set(grid))
    assert grid[0] == (1, 1, 1) and grid[-1] == (4, 4, 4)
    assert weights_label((1.0, 2.5, 3.0)) == "w1-2.5-3"


def test_sweep_rejects_two_grids_before_training(run_service, run_config):
    with pytest.raises(ConfigError):
        run_service.sweep(run_config, stage_splits=[0.5], stage2_weights=[(1.0, 1.0, 1.0)])
    with pytest.raises(ConfigError):
        run_service.sweep(run_config, stage2_weights=[(0.0, 0.0, 0.0)])
    assert not (run_config.output_dir / "teacher").exists()


def test_best_ignores_runs_without_the_metric(run_service, run_config):
    config = apply_overrides(run_config, {"distill.total_steps": 2})
    report = run_service.sweep(config, ablations=[Ablation.FULL], seeds=(0,))
    assert report.best("no-such-metric") is None
    assert report.best("accuracy") is report.manifests[0]
