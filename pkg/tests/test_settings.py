from pathlib import Path

from lrc_distill.settings import RuntimeSettings


def test_environment_overrides(monkeypatch):
    monkeypatch.setenv("LRC_LOG_LEVEL", " debug ")
    monkeypatch.setenv("LRC_TEACHER_WORKERS", "3")
    monkeypatch.setenv("LRC_RUNS_DIR", "/tmp/lrc-runs")

    runtime = RuntimeSettings(_env_file=None)
    assert runtime.log_level == "DEBUG"
    assert runtime.teacher_workers == 3
    assert runtime.runs_dir == Path("/tmp/lrc-runs")


def test_defaults(monkeypatch):
    for name in ("LRC_LOG_LEVEL", "LRC_TEACHER_WORKERS", "LRC_RUNS_DIR"):
        monkeypatch.delenv(name, raising=False)
    runtime = RuntimeSettings(_env_file=None)
    assert (runtime.log_level, runtime.teacher_workers, runtime.runs_dir) == ("INFO", 1, Path("runs"))
