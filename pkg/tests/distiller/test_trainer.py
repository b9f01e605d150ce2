import numpy as np
import pytest

from lrc_distill.distiller import (
    Adam,
    LrSchedule,
    OptimizerKind,
    ensure_compatible,
    supervised_loss,
    train_teacher,
)
from lrc_distill.encoder import init_params
from lrc_distill.errors import ConfigError, DivergenceError
from lrc_distill.tensor import Tensor


def test_zero_steps_returns_the_initialized_model(teacher_config, parity_task):
    model = train_teacher(teacher_config, parity_task, steps=0, seed=4)
    reference = init_params(teacher_config, seed=4)
    for name, value in reference.state().items():
        np.testing.assert_array_equal(model[name].data, value)


def test_training_is_deterministic_and_moves_parameters(teacher_config, parity_task, parity_splits):
    kwargs = dict(steps=3, seed=1, batch_size=8, train_samples=parity_splits[0])
    a = train_teacher(teacher_config, parity_task, **kwargs)
    b = train_teacher(teacher_config, parity_task, **kwargs)
    initial = init_params(teacher_config, seed=1)

    for name, value in a.state().items():
        np.testing.assert_array_equal(b[name].data, value)
    assert any(
        not np.array_equal(value, initial[name].data) for name, value in a.state().items()
    )


def test_sgd_teacher_training(teacher_config, parity_task, parity_splits):
    model = train_teacher(
        teacher_config,
        parity_task,
        steps=2,
        seed=0,
        optimizer=OptimizerKind.SGD,
        learning_rate=0.1,
        train_samples=parity_splits[0],
    )
    assert model.config == teacher_config


def test_non_finite_loss_raises_divergence(monkeypatch, teacher_config, parity_task, parity_splits):
    monkeypatch.setattr(
        "lrc_distill.distiller.trainer.supervised_loss",
        lambda logits, labels: Tensor(float("nan")),
    )
    with pytest.raises(DivergenceError) as info:
        train_teacher(teacher_config, parity_task, steps=3, seed=0, train_samples=parity_splits[0])
    assert info.value.step == 0


def test_incompatible_model_is_rejected(teacher_config, parity_task):
    short = teacher_config.model_copy(update={"max_len": 4, "num_classes": 1})
    with pytest.raises(ConfigError) as info:
        ensure_compatible(short, parity_task, role="teacher")
    assert info.value.fields == ["teacher.max_len", "teacher.num_classes"]


def test_supervised_loss_values():
    logits = Tensor(np.array([[0.0, 0.0], [2.0, 0.0]]))
    expected = np.mean([np.log(2.0), np.log1p(np.exp(-2.0))])
    assert supervised_loss(logits, np.array([1, 0])).item() == pytest.approx(expected)

    outputs = Tensor(np.array([[0.5], [1.0]]))
    assert supervised_loss(outputs, np.array([0.0, 1.0])).item() == pytest.approx(0.125)


def test_learning_rate_follows_the_schedule(monkeypatch, teacher_config, parity_task, parity_splits):
    seen: list[float] = []
    original = Adam.step

    def record(self):
        seen.append(self.learning_rate)
        original(self)

    monkeypatch.setattr(Adam, "step", record)
    train_teacher(
        teacher_config,
        parity_task,
        steps=5,
        seed=0,
        learning_rate=0.01,
        lr_schedule=LrSchedule.COSINE,
        warmup_steps=2,
        train_samples=parity_splits[0],
    )
    assert seen[:3] == pytest.approx([0.005, 0.01, 0.01])
    assert seen[4] == pytest.approx(0.001)
