import pytest

from lrc_distill.errors import ComparisonError
from lrc_distill.services import (
    MISSING,
    RunKind,
    RunManifest,
    RunRow,
    compare,
    load_rows,
    write_comparison_csv,
    write_manifest,
)


def _manifest(run_config, name, metrics):
    return RunManifest(
        kind=RunKind.DISTILL,
        run_name=name,
        config=run_config,
        started_at="2026-01-01T00:00:00+00:00",
        wall_seconds=0.0,
        metrics=metrics,
    )


def test_columns_are_the_union_and_gaps_show_a_dash(tmp_path, run_config):
    paths = [
        write_manifest(_manifest(run_config, "full", {"agreement": 0.9, "accuracy": 0.8}), tmp_path / "a.json"),
        write_manifest(_manifest(run_config, "drop", {"agreement": 0.7, "layer1_mse": 0.25}), tmp_path / "b.json"),
    ]
    comparison = compare(load_rows(paths))

    assert comparison.task == "parity"
    assert comparison.columns == ["agreement", "accuracy", "layer1_mse"]
    full, drop = comparison.rows
    assert comparison.cell(full, "agreement") == "0.9000"
    assert comparison.cell(full, "layer1_mse") == MISSING
    assert comparison.cell(drop, "accuracy") == MISSING


def test_nan_metrics_are_shown_as_missing():
    comparison = compare(
        [RunRow(run="a", task="t", metrics={"pearson": float("nan")}), RunRow(run="b", task="t")]
    )
    assert comparison.cell(comparison.rows[0], "pearson") == MISSING


def test_written_table_can_be_compared_again(tmp_path):
    rows = [
        RunRow(run="a", task="t", metrics={"agreement": 1 / 3}),
        RunRow(run="b", task="t", metrics={"mse": 0.5}),
    ]
    path = write_comparison_csv(compare(rows), tmp_path / "out" / "table.csv")

    assert path.read_text().splitlines()[0] == "run,task,agreement,mse"
    reloaded = load_rows([path])
    assert reloaded == rows


def test_single_run_cannot_be_compared():
    with pytest.raises(ComparisonError):
        compare([RunRow(run="a", task="t")])


def test_runs_from_different_tasks_are_rejected():
    with pytest.raises(ComparisonError, match="different tasks"):
        compare([RunRow(run="a", task="parity"), RunRow(run="b", task="fraction")])


def test_csv_without_run_column_is_rejected(tmp_path):
    path = tmp_path / "other.csv"
    path.write_text("name,value\nx,1\n", encoding="utf-8")
    with pytest.raises(ComparisonError):
        load_rows([path])
