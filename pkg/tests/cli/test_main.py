from pathlib import Path

import pytest
import yaml

from lrc_distill.cli import main as cli
from lrc_distill.distiller import read_step_log
from lrc_distill.services import load_manifest


@pytest.fixture
def config_file(tmp_path, run_config) -> Path:
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(run_config.model_dump(mode="json")), encoding="utf-8")
    return path


@pytest.fixture(autouse=True)
def service(monkeypatch, run_service):
    monkeypatch.setattr(cli, "get_run_service", lambda: run_service)
    return run_service


def _run(*argv: str | Path) -> int:
    return cli.main(["--log-level", "warning", *(str(a) for a in argv)])


def test_train_distill_eval(config_file, run_config):
    assert _run("train-teacher", config_file, "--steps", "3") == cli.EXIT_OK
    assert _run("distill", config_file, "--total-steps", "4", "--no-perturbation") == cli.EXIT_OK

    manifest = load_manifest(run_config.output_dir / "student" / "manifest.json")
    assert manifest.config.distill.total_steps == 4
    assert manifest.config.distill.perturbation_enabled is False
    assert manifest.config.teacher.steps == run_config.teacher.steps

    teacher_dir = run_config.output_dir / "teacher"
    assert _run("eval", config_file, "--reference", teacher_dir) == cli.EXIT_OK
    assert (
        _run("eval", config_file, "--checkpoint", teacher_dir, "--reference", teacher_dir, "--min-agreement", "1.0")
        == cli.EXIT_OK
    )
    assert _run("eval", config_file, "--reference", teacher_dir, "--min-agreement", "1.01") == cli.EXIT_FAILED


def test_min_agreement_needs_a_reference(config_file):
    _run("train-teacher", config_file, "--steps", "0")
    teacher_dir = Path(yaml.safe_load(config_file.read_text())["output_dir"]) / "teacher"
    assert _run("eval", config_file, "--checkpoint", teacher_dir, "--min-agreement", "0.5") == cli.EXIT_CONFIG


def test_invalid_config_exits_with_config_code(tmp_path, run_config, capsys):
    tree = run_config.model_dump(mode="json")
    del tree["task"]["kind"]
    path = tmp_path / "broken.yaml"
    path.write_text(yaml.safe_dump(tree), encoding="utf-8")

    assert _run("train-teacher", path) == cli.EXIT_CONFIG
    assert "task.kind" in capsys.readouterr().out


def test_invalid_override_exits_with_config_code(config_file):
    assert _run("distill", config_file, "--stage-split", "1.5") == cli.EXIT_CONFIG


def test_missing_teacher_checkpoint_exits_with_config_code(config_file, tmp_path):
    assert (
        _run("distill", config_file, "--teacher-checkpoint", tmp_path / "nowhere") == cli.EXIT_CONFIG
    )


def test_output_dir_override(config_file, tmp_path):
    target = tmp_path / "elsewhere"
    assert _run("train-teacher", config_file, "--steps", "1", "--output-dir", target) == cli.EXIT_OK
    assert (target / "teacher" / "manifest.json").exists()


def test_grad_check_passes_and_catches_corruption():
    assert _run("grad-check", "--scope", "losses") == cli.EXIT_OK
    assert _run("grad-check", "--scope", "losses", "--corrupt-op", "soft_loss") == cli.EXIT_FAILED


def test_compare_needs_two_runs(tmp_path, config_file, run_config):
    _run("train-teacher", config_file, "--steps", "1")
    manifest = run_config.output_dir / "teacher" / "manifest.json"
    assert _run("compare", manifest) == cli.EXIT_CONFIG

    output = tmp_path / "table.csv"
    assert _run("compare", manifest, manifest, "--output", output) == cli.EXIT_OK
    assert output.read_text().startswith("run,task,accuracy")


def test_sweep_writes_table(config_file, run_config):
    code = _run("sweep", config_file, "--seeds", "0", "--total-steps", "2")
    assert code in (cli.EXIT_OK, cli.EXIT_FAILED)
    assert (run_config.output_dir / "sweep.csv").exists()


def test_bench(config_file):
    assert _run("bench", config_file, "--repeats", "1") == cli.EXIT_OK


def test_unknown_command_is_a_usage_error():
    with pytest.raises(SystemExit) as info:
        cli.main(["train-everything"])
    assert info.value.code == 2


def test_teacher_rerun_gives_identical_checkpoint(config_file, tmp_path):
    blobs = []
    for name in ("first", "second"):
        target = tmp_path / name
        assert _run("train-teacher", config_file, "--steps", "2", "--output-dir", target) == cli.EXIT_OK
        blobs.append((target / "teacher" / "model.bin").read_bytes())
    assert blobs[0] == blobs[1]


def test_drop_cosnce_zeroes_the_transformer_column(config_file, run_config):
    _run("train-teacher", config_file, "--steps", "1")
    assert _run("distill", config_file, "--ablation", "drop-cosnce") == cli.EXIT_OK

    rows = read_step_log(run_config.output_dir / "student" / "steps.csv")
    assert rows and all(float(row["l_transformer"]) == 0.0 for row in rows)
    assert all(row["perturbed_loss"] != "" for row in rows)


def test_stage2_weight_sweep(config_file, run_config):
    code = _run("sweep", config_file, "--seeds", "0", "--total-steps", "2", "--stage2-weights", "1,1,3", "2,1,3")
    assert code == cli.EXIT_OK
    rows = (run_config.output_dir / "sweep.csv").read_text().splitlines()
    assert [row.split(",")[0] for row in rows[1:]] == ["w1-1-3-seed0", "w2-1-3-seed0"]


def test_stage2_grid_expands_to_triples(config_file, run_config):
    assert _run("sweep", config_file, "--seeds", "0", "1", "--total-steps", "2", "--stage2-grid", "1") == cli.EXIT_OK
    assert (run_config.output_dir / "w1-1-1-seed0" / "manifest.json").exists()


@pytest.mark.parametrize("bad", [["--stage2-weights", "1,1"], ["--stage2-weights", "a,b,c"], ["--stage2-grid", "1", "--stage-splits", "0.5"]])
def test_malformed_sweep_grids_are_usage_errors(config_file, bad):
    with pytest.raises(SystemExit) as info:
        cli.main(["sweep", str(config_file), *bad])
    assert info.value.code == 2
