from lrc_distill.distiller import STEP_LOG_COLUMNS, StepRecord, read_step_log, write_step_log
from lrc_distill.losses import LossWeights, Stage, combine


def _record(step: int, perturbed: float | None) -> StepRecord:
    report = combine(0.1 + step, 1 / 3, 2e-17, LossWeights(alpha=1.0, beta=1.0, gamma=3.0), Stage.STAGE2)
    return StepRecord(step=step, stage=Stage.STAGE2, loss_report=report, perturbed_loss=perturbed, grad_norm=0.7)


def test_step_log_round_trips_floats_exactly(tmp_path):
    records = [_record(0, 0.123456789012345678), _record(1, None)]
    path = write_step_log(records, tmp_path / "logs" / "steps.csv")
    rows = read_step_log(path)

    assert path.read_text().splitlines()[0] == ",".join(STEP_LOG_COLUMNS)
    assert len(rows) == 2
    assert float(rows[0]["l_soft"]) == 1 / 3
    assert float(rows[0]["l_hard"]) == 2e-17
    assert float(rows[0]["perturbed_loss"]) == 0.123456789012345678
    assert rows[1]["perturbed_loss"] == ""
    assert rows[1]["stage"] == "stage2"
    assert float(rows[1]["l_total"]) == records[1].loss_report.l_total
