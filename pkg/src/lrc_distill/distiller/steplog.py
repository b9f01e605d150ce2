import csv
from pathlib import Path
from typing import Sequence

from lrc_distill.distiller.models import StepRecord

STEP_LOG_COLUMNS = [
    "step",
    "stage",
    "l_transformer",
    "l_soft",
    "l_hard",
    "l_total",
    "perturbed_loss",
    "grad_norm",
    "alpha",
    "beta",
    "gamma",
]


def _fmt(value: float | None) -> str:
    # repr round-trips float64 exactly, keeping logs byte-stable across reruns
    return "" if value is None else repr(float(value))


def step_row(record: StepRecord) -> dict[str, str]:
    report = record.loss_report
    return {
        "step": str(record.step),
        "stage": record.stage.value,
        "l_transformer": _fmt(report.l_transformer),
        "l_soft": _fmt(report.l_soft),
        "l_hard": _fmt(report.l_hard),
        "l_total": _fmt(report.l_total),
        "perturbed_loss": _fmt(record.perturbed_loss),
        "grad_norm": _fmt(record.grad_norm),
        "alpha": _fmt(report.alpha),
        "beta": _fmt(report.beta),
        "gamma": _fmt(report.gamma),
    }


def write_step_log(records: Sequence[StepRecord], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=STEP_LOG_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(step_row(record) for record in records)
    return path


def read_step_log(path: Path) -> list[dict[str, str]]:
    with path.open(newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))
