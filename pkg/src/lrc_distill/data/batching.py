from typing import Iterator, Sequence

import numpy as np

from lrc_distill.data.models import Sample
from lrc_distill.errors import ConfigError


def batches(
    samples: Sequence[Sample],
    batch_size: int,
    seed: int,
    drop_last: bool = True,
) -> Iterator[list[Sample]]:
    """Seeded shuffle followed by fixed-size batches."""
    if batch_size < 2:
        raise ConfigError(
            f"batch_size must be >= 2 for in-batch negatives, got {batch_size}",
            fields=["batch_size"],
        )
    order = np.random.default_rng(seed).permutation(len(samples))
    for start in range(0, len(order), batch_size):
        chunk = order[start : start + batch_size]
        if drop_last and len(chunk) < batch_size:
            return
        yield [samples[int(i)] for i in chunk]


def endless_batches(
    samples: Sequence[Sample], batch_size: int, seed: int
) -> Iterator[list[Sample]]:
    """Epoch after epoch of ``batches``, reshuffled with ``seed + epoch``."""
    if len(samples) < batch_size:
        raise ConfigError(
            f"dataset of {len(samples)} samples cannot fill a batch of {batch_size}",
            fields=["batch_size"],
        )
    epoch = 0
    while True:
        yield from batches(samples, batch_size, seed + epoch, drop_last=True)
        epoch += 1


def token_matrix(batch: Sequence[Sample]) -> np.ndarray:
    return np.asarray([sample.tokens for sample in batch], dtype=np.int64)


def label_array(batch: Sequence[Sample]) -> np.ndarray:
    return np.asarray([sample.label for sample in batch], dtype=np.float64)
