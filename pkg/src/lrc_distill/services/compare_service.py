import csv
import math
from pathlib import Path
from typing import Sequence

from pydantic import BaseModel, Field

from lrc_distill.errors import ComparisonError
from lrc_distill.services.config import load_manifest

MISSING = "—"


class RunRow(BaseModel):
    """One row of a comparison table."""

    run: str
    task: str
    metrics: dict[str, float] = Field(default_factory=dict)


class Comparison(BaseModel):
    task: str
    columns: list[str]
    rows: list[RunRow]

    def cell(self, row: RunRow, column: str) -> str:
        value = row.metrics.get(column)
        if value is None or math.isnan(value):
            return MISSING
        return f"{value:.4f}"


def _rows_from_csv(path: Path) -> list[RunRow]:
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if not reader.fieldnames or not {"run", "task"} <= set(reader.fieldnames):
            raise ComparisonError(f"{path} is not a comparison table (needs run and task columns)")
        rows = []
        for line in reader:
            metrics = {
                key: float(value)
                for key, value in line.items()
                if key not in ("run", "task") and value not in (None, "", MISSING)
            }
            rows.append(RunRow(run=line["run"], task=line["task"], metrics=metrics))
    return rows


def load_rows(paths: Sequence[Path]) -> list[RunRow]:
    """Accept run manifests (.json) and previously written comparison tables (.csv)."""
    rows: list[RunRow] = []
    for path in paths:
        if path.suffix.lower() == ".csv":
            rows.extend(_rows_from_csv(path))
        else:
            manifest = load_manifest(path)
            rows.append(
                RunRow(run=manifest.run_name, task=manifest.task_name, metrics=manifest.metrics)
            )
    return rows


def compare(rows: Sequence[RunRow]) -> Comparison:
    """
    Align runs of one task into a table; columns are the union of metrics.

    Raises:
        ComparisonError: Fewer than two runs, or runs from different tasks.
    """
    if len(rows) < 2:
        raise ComparisonError(f"need at least two runs to compare, got {len(rows)}")
    tasks = sorted({row.task for row in rows})
    if len(tasks) > 1:
        raise ComparisonError(f"runs belong to different tasks: {', '.join(tasks)}")
    columns: list[str] = []
    for row in rows:
        columns.extend(key for key in row.metrics if key not in columns)
    return Comparison(task=tasks[0], columns=columns, rows=list(rows))


def write_comparison_csv(comparison: Comparison, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["run", "task", *comparison.columns])
        for row in comparison.rows:
            writer.writerow(
                [
                    row.run,
                    row.task,
                    *(
                        repr(row.metrics[c]) if c in row.metrics else MISSING
                        for c in comparison.columns
                    ),
                ]
            )
    return path
