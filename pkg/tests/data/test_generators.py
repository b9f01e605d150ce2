from collections import Counter

import pytest

from lrc_distill.data import (
    TaskKind,
    TaskSpec,
    gen_pair_match,
    gen_parity,
    gen_regression,
    label_rule,
    make_splits,
    random_sequences,
)
from lrc_distill.data.vocab import ONE_ID, SEP_ID, START_ID
from lrc_distill.errors import InputError


def test_parity_labels_follow_rule_and_are_balanced():
    samples = gen_parity(200, 16, seed=0)
    rule = label_rule(TaskKind.SINGLE_CLASSIFY)

    assert all(len(s.tokens) == 16 and s.tokens[0] == START_ID for s in samples)
    assert all(rule(s.tokens) == s.label for s in samples)
    assert sum(s.label for s in samples) == 100


def test_pair_match_labels_follow_rule():
    samples = gen_pair_match(200, 12, vocab=12, seed=1)
    rule = label_rule(TaskKind.PAIR_CLASSIFY)

    assert all(s.tokens[6] == SEP_ID for s in samples)
    assert all(rule(s.tokens) == s.label for s in samples)


def test_regression_target_is_fraction_of_ones():
    samples = gen_regression(100, 9, seed=2)
    assert all(s.label == s.tokens.count(ONE_ID) / 8 for s in samples)
    assert all(0.0 <= s.label <= 1.0 for s in samples)


def test_all_ones_regression_sequence_scores_one():
    assert label_rule(TaskKind.REGRESSION)([START_ID] + [ONE_ID] * 5) == 1.0


def test_generators_are_deterministic():
    assert gen_parity(50, 10, seed=3) == gen_parity(50, 10, seed=3)
    assert random_sequences(5, 6, 9, seed=4) == random_sequences(5, 6, 9, seed=4)


def test_splits_are_disjoint_and_balanced(parity_task):
    train, evaluation = make_splits(parity_task)
    train_tokens = {tuple(s.tokens) for s in train}

    assert len(train) == parity_task.n_train
    assert len(evaluation) == parity_task.n_eval
    assert len(train_tokens) == len(train)
    assert train_tokens.isdisjoint(tuple(s.tokens) for s in evaluation)
    assert sum(s.label for s in train) == parity_task.n_train // 2
    assert sum(s.label for s in evaluation) == parity_task.n_eval // 2


def test_splits_fail_when_sequence_space_is_too_small():
    task = TaskSpec(
        name="tiny", kind=TaskKind.SINGLE_CLASSIFY, vocab_size=5, seq_len=4, num_classes=2, n_train=40, n_eval=10
    )
    with pytest.raises(InputError, match="too few distinct"):
        make_splits(task)


@pytest.mark.parametrize(
    "overrides",
    [
        {"kind": "regression", "num_classes": 2},
        {"kind": "single_classify", "num_classes": 1},
        {"kind": "pair_classify", "seq_len": 7},
        {"kind": "pair_classify", "vocab_size": 6, "seq_len": 8},
        {"unknown": 1},
    ],
)
def test_task_spec_validation(overrides):
    base = {"name": "t", "kind": "single_classify", "vocab_size": 12, "seq_len": 8, "num_classes": 2}
    with pytest.raises(ValueError):
        TaskSpec(**{**base, **overrides})


def test_parity_counts_are_uniform_within_each_class():
    samples = gen_parity(4000, 12, seed=5)
    by_label = {0: Counter(), 1: Counter()}
    for s in samples:
        by_label[s.label][s.tokens.count(ONE_ID)] += 1

    assert set(by_label[0]) == {0, 2, 4, 6, 8, 10}
    assert set(by_label[1]) == {1, 3, 5, 7, 9, 11}
    for counts in by_label.values():
        assert all(250 <= c <= 420 for c in counts.values())


def test_shipped_parity_task_has_enough_sequences():
    task = TaskSpec(
        name="parity", kind=TaskKind.SINGLE_CLASSIFY, vocab_size=5, seq_len=12, num_classes=2,
        n_train=1000, n_eval=300,
    )
    train, evaluation = make_splits(task)
    assert len(train) == 1000 and len(evaluation) == 300
    assert {s.tokens.count(ONE_ID) for s in train} >= set(range(1, 11))
