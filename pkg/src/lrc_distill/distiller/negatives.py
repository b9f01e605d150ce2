from typing import Sequence

import numpy as np

from lrc_distill.encoder import ForwardTrace
from lrc_distill.errors import ConfigError
from lrc_distill.tensor import Tensor


def sample_negatives(
    batch: Sequence[object] | int,
    index: int,
    k: int,
    rng: np.random.Generator,
) -> list[int]:
    """
    Indices of the in-batch samples used as negatives for ``batch[index]``.

    With ``k == len(batch) - 1`` every other sample is returned in batch
    order. Smaller ``k`` draws uniformly without replacement from the
    others using ``rng``, which the caller seeds.
    """
    size = batch if isinstance(batch, int) else len(batch)
    if not 0 <= index < size:
        raise ConfigError(f"index {index} outside a batch of {size}")
    if k >= size or k < 1:
        raise ConfigError(
            f"cannot draw {k} negatives from a batch of {size}; need 1 <= K < batch_size",
            fields=["distill.num_negatives"],
        )
    others = [i for i in range(size) if i != index]
    if k == len(others):
        return others
    chosen = rng.choice(len(others), size=k, replace=False)
    return [others[int(i)] for i in sorted(chosen)]


def negative_index_matrix(batch_size: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """``[batch_size, k]`` matrix whose row i lists the negatives of sample i."""
    return np.asarray(
        [sample_negatives(batch_size, i, k, rng) for i in range(batch_size)],
        dtype=np.int64,
    )


def _rows(tensor: Tensor, rows: np.ndarray) -> Tensor:
    return Tensor(tensor.data[rows])


def gather_negative_traces(
    teacher_trace: ForwardTrace, index: np.ndarray
) -> list[ForwardTrace]:
    """
    Re-index a batched teacher trace into K negative traces.

    Trace k holds, for every batch row i, the teacher outputs of sample
    ``index[i, k]``. All tensors are constants.
    """
    return [
        ForwardTrace(
            emb_out=_rows(teacher_trace.emb_out, column),
            ffn_outs=[_rows(h, column) for h in teacher_trace.ffn_outs],
            logits=_rows(teacher_trace.logits, column),
        )
        for column in index.T
    ]
