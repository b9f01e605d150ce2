from collections import deque
from typing import Callable

import numpy as np
from loguru import logger

from lrc_distill.data.models import Sample, TaskKind, TaskSpec
from lrc_distill.data.vocab import FIRST_CONTENT_ID, ONE_ID, SEP_ID, START_ID, ZERO_ID
from lrc_distill.errors import InputError

_MAX_POOL_ROUNDS = 8


def _bits_to_tokens(bits: np.ndarray) -> list[int]:
    return [START_ID, *np.where(bits == 1, ONE_ID, ZERO_ID).tolist()]


def gen_parity(n: int, l: int, seed: int) -> list[Sample]:
    """
    Random binary sequences labelled with the parity of their "1" count.

    Sample ``i`` has parity ``i % 2``, so the labels are balanced by
    construction. Its number of ones is drawn uniformly among the counts of
    that parity and the ones are then placed at uniform positions.

    Args:
        n: Number of samples.
        l: Sequence length including the start token.
        seed: Generator seed.

    Example:
        >>> [s.label for s in gen_parity(4, 8, seed=0)]
        [0, 1, 0, 1]
    """
    if l < 2:
        raise InputError(f"parity needs l >= 2, got {l}")
    rng = np.random.default_rng(seed)
    width = l - 1
    counts = {p: np.arange(p, width + 1, 2) for p in (0, 1)}
    samples: list[Sample] = []
    for i in range(n):
        target = i % 2
        ones = int(rng.choice(counts[target]))
        bits = np.zeros(width, dtype=np.int64)
        bits[rng.permutation(width)[:ones]] = 1
        samples.append(Sample(tokens=_bits_to_tokens(bits), label=target))
    return samples


def gen_pair_match(n: int, l: int, vocab: int, seed: int) -> list[Sample]:
    """
    ``start seq1 SEP seq2`` pairs labelled 1 iff seq2 permutes seq1.

    Positives are shuffled copies, negatives independent draws re-drawn until
    they are not a permutation; labels alternate so the set is balanced.
    """
    if l % 2 != 0 or l < 4:
        raise InputError(f"pair_match needs an even l >= 4, got {l}")
    if vocab < 8:
        raise InputError(f"pair_match needs vocab >= 8, got {vocab}")
    rng = np.random.default_rng(seed)
    half = (l - 2) // 2
    samples: list[Sample] = []
    for i in range(n):
        target = i % 2
        first = rng.integers(FIRST_CONTENT_ID, vocab, size=half)
        if target == 1:
            second = rng.permutation(first)
        else:
            second = rng.integers(FIRST_CONTENT_ID, vocab, size=half)
            while np.array_equal(np.sort(first), np.sort(second)):
                second = rng.integers(FIRST_CONTENT_ID, vocab, size=half)
        tokens = [START_ID, *first.tolist(), SEP_ID, *second.tolist()]
        samples.append(Sample(tokens=tokens, label=target))
    return samples


def gen_regression(n: int, l: int, seed: int) -> list[Sample]:
    """Binary sequences whose target is the fraction of "1" content tokens."""
    if l < 2:
        raise InputError(f"regression needs l >= 2, got {l}")
    rng = np.random.default_rng(seed)
    width = l - 1
    samples: list[Sample] = []
    for _ in range(n):
        ones = int(rng.integers(0, width + 1))
        bits = np.zeros(width, dtype=np.int64)
        bits[rng.permutation(width)[:ones]] = 1
        samples.append(Sample(tokens=_bits_to_tokens(bits), label=ones / width))
    return samples


def random_sequences(n: int, l: int, vocab: int, seed: int) -> list[Sample]:
    """Unlabelled start-prefixed content sequences for task-agnostic distillation."""
    rng = np.random.default_rng(seed)
    return [
        Sample(
            tokens=[START_ID, *rng.integers(FIRST_CONTENT_ID, vocab, size=l - 1).tolist()],
            label=0,
        )
        for _ in range(n)
    ]


def generate(task: TaskSpec, n: int, seed: int) -> list[Sample]:
    """Dispatch to the generator matching ``task.kind``."""
    if task.kind is TaskKind.SINGLE_CLASSIFY:
        return gen_parity(n, task.seq_len, seed)
    if task.kind is TaskKind.PAIR_CLASSIFY:
        return gen_pair_match(n, task.seq_len, task.vocab_size, seed)
    return gen_regression(n, task.seq_len, seed)


def make_splits(task: TaskSpec) -> tuple[list[Sample], list[Sample]]:
    """
    Deterministic train/eval splits with no token sequence in common.

    Classification splits alternate labels so both stay balanced.
    """
    wanted = task.n_train + task.n_eval
    pool: dict[tuple[int, ...], Sample] = {}
    for round_index in range(_MAX_POOL_ROUNDS):
        for sample in generate(task, 2 * wanted, task.generator_seed + round_index):
            pool.setdefault(tuple(sample.tokens), sample)
        if _enough(task, list(pool.values()), wanted):
            break
    unique = list(pool.values())
    if not _enough(task, unique, wanted):
        raise InputError(
            f"task {task.name} has too few distinct sequences for "
            f"{task.n_train}+{task.n_eval} samples"
        )

    if task.kind is TaskKind.REGRESSION:
        ordered = unique
    else:
        ordered = _interleave_labels(unique)
    train = _take_balanced(ordered, task.n_train, task.kind)
    taken = {tuple(s.tokens) for s in train}
    rest = [s for s in ordered if tuple(s.tokens) not in taken]
    evaluation = _take_balanced(rest, task.n_eval, task.kind)

    logger.debug(
        f"Generated task {task.name}: {len(train)} train / {len(evaluation)} eval"
    )
    return train, evaluation


def _enough(task: TaskSpec, samples: list[Sample], wanted: int) -> bool:
    if task.kind is TaskKind.REGRESSION:
        return len(samples) >= wanted
    per_label = (wanted + 3) // 2
    return all(sum(1 for s in samples if s.label == c) >= per_label for c in (0, 1))


def _interleave_labels(samples: list[Sample]) -> list[Sample]:
    queues = {0: deque(s for s in samples if s.label == 0)}
    queues[1] = deque(s for s in samples if s.label == 1)
    ordered: list[Sample] = []
    while queues[0] or queues[1]:
        for label in (0, 1):
            if queues[label]:
                ordered.append(queues[label].popleft())
    return ordered


def _take_balanced(samples: list[Sample], n: int, kind: TaskKind) -> list[Sample]:
    if kind is TaskKind.REGRESSION:
        return samples[:n]
    counts = {0: (n + 1) // 2, 1: n // 2}
    chosen: list[Sample] = []
    for sample in samples:
        if counts[int(sample.label)] > 0:
            chosen.append(sample)
            counts[int(sample.label)] -= 1
        if len(chosen) == n:
            break
    return chosen


def label_rule(kind: TaskKind) -> Callable[[list[int]], int | float]:
    """Rule that recomputes a label from tokens alone."""

    def parity(tokens: list[int]) -> int:
        return tokens.count(ONE_ID) % 2

    def pair_match(tokens: list[int]) -> int:
        sep = tokens.index(SEP_ID)
        return int(sorted(tokens[1:sep]) == sorted(tokens[sep + 1 :]))

    def fraction(tokens: list[int]) -> float:
        return tokens.count(ONE_ID) / (len(tokens) - 1)

    return {
        TaskKind.SINGLE_CLASSIFY: parity,
        TaskKind.PAIR_CLASSIFY: pair_match,
        TaskKind.REGRESSION: fraction,
    }[kind]
