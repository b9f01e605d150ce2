import pytest

from lrc_distill.services import GradCheckScope, run_grad_check


@pytest.mark.parametrize("scope", list(GradCheckScope))
def test_every_scope_passes(scope):
    results = run_grad_check(scope, seed=0)
    assert results
    assert all(r.passed for r in results), [r for r in results if not r.passed]


def test_losses_cover_every_loss():
    ops = {r.op for r in run_grad_check(GradCheckScope.LOSSES, seed=1)}
    assert {
        "angular_distance",
        "cos_nce",
        "soft_loss",
        "hard_loss",
        "regression_losses",
        "mse_layer_loss",
        "transformer_stage_loss",
    } <= ops


def test_corrupted_gradient_fails_only_its_case():
    results = run_grad_check(GradCheckScope.LOSSES, seed=0, corrupt_op="cos_nce")
    failed = {r.op for r in results if not r.passed}
    assert failed == {"cos_nce"}
