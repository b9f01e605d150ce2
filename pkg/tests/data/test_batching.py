import numpy as np
import pytest

from lrc_distill.data import Sample, batches, endless_batches, export_jsonl, import_jsonl, label_array, token_matrix
from lrc_distill.errors import ConfigError, InputError


def _samples(n: int) -> list[Sample]:
    return [Sample(tokens=[2, 3 + i % 2, 4, i], label=i % 2) for i in range(n)]


def test_batches_are_seeded_and_drop_the_remainder():
    samples = _samples(10)
    first = list(batches(samples, 4, seed=0))
    second = list(batches(samples, 4, seed=0))

    assert [len(b) for b in first] == [4, 4]
    assert first == second
    assert list(batches(samples, 4, seed=1)) != first


def test_batch_size_below_two_is_rejected():
    with pytest.raises(ConfigError):
        list(batches(_samples(4), 1, seed=0))


def test_endless_batches_reshuffle_every_epoch():
    stream = endless_batches(_samples(8), 4, seed=0)
    epochs = [next(stream) + next(stream) for _ in range(3)]
    assert all(len(epoch) == 8 for epoch in epochs)

    with pytest.raises(ConfigError):
        next(endless_batches(_samples(3), 4, seed=0))


def test_matrices():
    batch = _samples(3)
    np.testing.assert_array_equal(token_matrix(batch), [[2, 3, 4, 0], [2, 4, 4, 1], [2, 3, 4, 2]])
    assert token_matrix(batch).dtype == np.int64
    np.testing.assert_array_equal(label_array(batch), [0.0, 1.0, 0.0])


def test_jsonl_export_and_import(tmp_path):
    samples = _samples(5) + [Sample(tokens=[2, 4, 4, 9], label=0.5)]
    path = export_jsonl(samples, tmp_path / "data" / "train.jsonl")
    assert import_jsonl(path) == samples

    path.write_text('{"tokens": "nope"}\n')
    with pytest.raises(InputError, match="train.jsonl:1"):
        import_jsonl(path)
