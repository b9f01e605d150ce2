import math

import numpy as np
import pytest

from lrc_distill.errors import DimensionError, InputError, NumericDomainError, NumericError, ParameterError
from lrc_distill.losses import (
    LossWeights,
    Stage,
    angular_distance,
    combine,
    cos_nce,
    hard_loss,
    mse_layer_loss,
    regression_losses,
    soft_loss,
    weighted_total,
)
from lrc_distill.tensor import Tensor


# ---------------------------------------------------------------------------
# Reference formulas written directly in numpy
# ---------------------------------------------------------------------------
def ref_g(x, y):
    return 1.0 - float(np.dot(x, y)) / (math.sqrt(float(np.dot(x, x))) * math.sqrt(float(np.dot(y, y))))


def ref_cos_nce(z_s, z_t, negatives):
    positive = ref_g(z_t, z_s)
    k = len(negatives)
    return sum((2.0 - (ref_g(n, z_s) - positive)) / (2.0 * k) for n in negatives) + positive


def ref_softmax(x, tau=1.0):
    z = np.exp((x - x.max()) / tau)
    return z / z.sum()


def ref_soft(y_s, y_t, tau):
    p, q = ref_softmax(y_t, tau), ref_softmax(y_s, tau)
    return float(np.sum(p * (np.log(p) - np.log(q))))


def ref_hard(y_s, onehot, tau):
    return float(-np.sum(ref_softmax(onehot, tau) * np.log(ref_softmax(y_s))))


# ---------------------------------------------------------------------------
# Anchors
# ---------------------------------------------------------------------------
def test_cos_nce_hand_computed_anchors():
    assert cos_nce(Tensor([1.0, 0.0]), Tensor([1.0, 0.0]), [Tensor([0.0, 1.0])]).item() == pytest.approx(0.5, abs=1e-15)
    assert cos_nce(Tensor([0.0, 1.0]), Tensor([1.0, 0.0]), [Tensor([0.0, 1.0])]).item() == pytest.approx(2.5, abs=1e-15)


def test_angular_distance_of_opposite_vectors_is_exactly_two():
    assert angular_distance(Tensor([1.0, 0.0]), Tensor([-1.0, 0.0])).item() == 2.0


def test_cos_nce_minimum_with_antiparallel_negatives():
    z = Tensor([0.3, -1.2, 2.0])
    assert cos_nce(z, z, [-z, -z]).item() == pytest.approx(0.0, abs=1e-12)


def test_loss_formulas_match_reference_on_random_fixtures():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        dim, k, classes = int(rng.integers(2, 9)), int(rng.integers(1, 6)), int(rng.integers(2, 6))
        tau = float(rng.uniform(0.3, 3.0))
        z_s, z_t = rng.normal(size=dim), rng.normal(size=dim)
        negatives = rng.normal(size=(k, dim))
        y_s, y_t = rng.normal(size=classes) * 3, rng.normal(size=classes) * 3
        onehot = np.eye(classes)[int(rng.integers(classes))]

        assert angular_distance(Tensor(z_s), Tensor(z_t)).item() == pytest.approx(ref_g(z_s, z_t), abs=1e-10)
        assert cos_nce(Tensor(z_s), Tensor(z_t), Tensor(negatives)).item() == pytest.approx(
            ref_cos_nce(z_s, z_t, negatives), abs=1e-10
        )
        assert soft_loss(Tensor(y_s), Tensor(y_t), tau).item() == pytest.approx(ref_soft(y_s, y_t, tau), abs=1e-10)
        assert hard_loss(Tensor(y_s), onehot, tau).item() == pytest.approx(ref_hard(y_s, onehot, tau), abs=1e-10)


def test_batched_cos_nce_matches_per_sample(rng):
    z_s, z_t = rng.normal(size=(4, 6)), rng.normal(size=(4, 6))
    negatives = rng.normal(size=(4, 3, 6))
    batched = cos_nce(Tensor(z_s), Tensor(z_t), Tensor(negatives)).data

    assert batched.shape == (4,)
    for i in range(4):
        assert batched[i] == pytest.approx(ref_cos_nce(z_s[i], z_t[i], negatives[i]), abs=1e-12)


# ---------------------------------------------------------------------------
# Ranges and invariances
# ---------------------------------------------------------------------------
def test_ranges_and_scale_invariance():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        x, y = rng.normal(size=5), rng.normal(size=5)
        g = angular_distance(Tensor(x), Tensor(y)).item()
        assert 0.0 <= g <= 2.0
        scale = float(rng.uniform(1e-3, 1e3))
        assert angular_distance(Tensor(x * scale), Tensor(y)).item() == pytest.approx(g, abs=1e-12)

        value = cos_nce(Tensor(x), Tensor(y), Tensor(rng.normal(size=(3, 5)))).item()
        assert 0.0 <= value <= 4.0


def test_cos_nce_decreases_when_a_negative_moves_away():
    rng = np.random.default_rng(5)
    checked = 0
    while checked < 1000:
        z_s, z_t = rng.normal(size=4), rng.normal(size=4)
        negatives = rng.normal(size=(3, 4))
        farther = negatives.copy()
        farther[0] = rng.normal(size=4)
        if ref_g(farther[0], z_s) <= ref_g(negatives[0], z_s) + 1e-9:
            continue
        near = cos_nce(Tensor(z_s), Tensor(z_t), Tensor(negatives)).item()
        far = cos_nce(Tensor(z_s), Tensor(z_t), Tensor(farther)).item()
        assert far < near
        checked += 1


# ---------------------------------------------------------------------------
# Prediction-layer losses
# ---------------------------------------------------------------------------
def test_soft_loss_is_zero_for_identical_logits(rng):
    y = Tensor(rng.normal(size=(3, 4)))
    np.testing.assert_allclose(soft_loss(y, y, 1.1).data, 0.0, atol=1e-12)


def test_hard_loss_literal_and_one_hot_targets():
    y_s = Tensor([2.0, -1.0, 0.5])
    onehot = [0.0, 1.0, 0.0]
    literal = hard_loss(y_s, onehot, 1.1).item()
    plain = hard_loss(y_s, onehot, 1.1, literal=False).item()

    assert plain == pytest.approx(-math.log(ref_softmax(np.array([2.0, -1.0, 0.5]))[1]))
    assert literal == pytest.approx(ref_hard(np.array([2.0, -1.0, 0.5]), np.array(onehot), 1.1))
    assert literal != pytest.approx(plain)


@pytest.mark.parametrize("label", [[0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.5, 0.5, 0.0]])
def test_hard_loss_rejects_non_one_hot(label):
    with pytest.raises(InputError):
        hard_loss(Tensor([1.0, 2.0, 3.0]), label, 1.1)


def test_temperature_must_be_positive():
    with pytest.raises(ParameterError):
        soft_loss(Tensor([1.0, 2.0]), Tensor([1.0, 2.0]), 0.0)
    with pytest.raises(ParameterError):
        hard_loss(Tensor([1.0, 2.0]), [1.0, 0.0], -1.0)


def test_regression_losses_are_squared_errors():
    soft, hard = regression_losses(Tensor(0.5), 0.2, 1.0)
    assert soft.item() == pytest.approx(0.09)
    assert hard.item() == pytest.approx(0.25)


def test_mse_layer_loss_and_shape_checks(rng):
    h = rng.normal(size=(2, 3))
    assert mse_layer_loss(Tensor(h), Tensor(h + 2.0)).item() == pytest.approx(4.0)
    with pytest.raises(DimensionError):
        mse_layer_loss(Tensor(h), Tensor(h.T))
    with pytest.raises(NumericDomainError):
        angular_distance(Tensor([0.0, 0.0]), Tensor([1.0, 0.0]))
    with pytest.raises(ParameterError):
        cos_nce(Tensor([1.0, 0.0]), Tensor([1.0, 0.0]), [])


# ---------------------------------------------------------------------------
# Combination
# ---------------------------------------------------------------------------
def test_combine_weights_terms():
    report = combine(0.5, 0.2, 0.1, LossWeights(alpha=1.0, beta=1.0, gamma=3.0), stage=Stage.STAGE2)
    assert report.l_total == pytest.approx(0.5 + 0.2 + 0.3)
    assert (report.alpha, report.beta, report.gamma) == (1.0, 1.0, 3.0)


def test_combine_names_the_non_finite_term():
    with pytest.raises(NumericError) as info:
        combine(0.5, float("nan"), 0.1, LossWeights(alpha=1.0, beta=1.0, gamma=1.0))
    assert info.value.term == "l_soft"


def test_all_zero_weights_are_rejected():
    with pytest.raises(ValueError):
        LossWeights(alpha=0.0, beta=0.0, gamma=0.0)


def test_weighted_total_skips_absent_and_unweighted_terms():
    total = weighted_total(Tensor(2.0), None, Tensor(5.0), LossWeights(alpha=1.0, beta=1.0, gamma=0.0))
    assert total.item() == 2.0
