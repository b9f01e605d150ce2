from typing import Sequence

import numpy as np
from loguru import logger
from scipy.stats import pearsonr
from sklearn.metrics import accuracy_score, f1_score

from lrc_distill.data import Sample, label_array, token_matrix
from lrc_distill.distiller.projection import Projection
from lrc_distill.encoder import EncoderModel, ForwardTrace, forward
from lrc_distill.errors import InputError

EVAL_CHUNK = 256


def _traces(model: EncoderModel, samples: Sequence[Sample]) -> list[ForwardTrace]:
    ids = token_matrix(samples)
    return [forward(model, ids[start : start + EVAL_CHUNK]) for start in range(0, len(ids), EVAL_CHUNK)]


def predict(model: EncoderModel, samples: Sequence[Sample]) -> np.ndarray:
    """Class ids, or raw outputs for a single-output head."""
    logits = np.concatenate([trace.logits.data for trace in _traces(model, samples)])
    if model.config.is_regression:
        return logits[:, 0]
    return np.argmax(logits, axis=-1)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    if np.ptp(a) == 0.0 or np.ptp(b) == 0.0:
        logger.warning("Pearson correlation undefined for a constant series, reporting 0.0")
        return 0.0
    return float(pearsonr(a, b).statistic)


def evaluate(
    model: EncoderModel,
    samples: Sequence[Sample],
    reference: EncoderModel | None = None,
) -> dict[str, float]:
    """
    Task metrics of ``model`` on ``samples``.

    Classification reports accuracy and macro-F1, plus positive-class F1
    for binary heads. Regression reports Pearson correlation and MSE. With
    a ``reference`` model, ``agreement`` is the fraction of identical
    predictions (the Pearson correlation of the two outputs for regression).

    Raises:
        InputError: ``samples`` is empty.
    """
    if not samples:
        raise InputError("cannot evaluate on an empty dataset")
    labels = label_array(samples)
    predictions = predict(model, samples)

    metrics: dict[str, float] = {}
    if model.config.is_regression:
        metrics["pearson"] = _pearson(predictions, labels)
        metrics["mse"] = float(np.mean((predictions - labels) ** 2))
    else:
        y = labels.astype(np.int64)
        metrics["accuracy"] = float(accuracy_score(y, predictions))
        metrics["macro_f1"] = float(
            f1_score(y, predictions, average="macro", zero_division=0)
        )
        if model.config.num_classes == 2:
            metrics["f1"] = float(f1_score(y, predictions, pos_label=1, zero_division=0))

    if reference is not None:
        expected = predict(reference, samples)
        if model.config.is_regression:
            metrics["agreement"] = _pearson(predictions, expected)
        else:
            metrics["agreement"] = float(np.mean(predictions == expected))

    logger.info("Evaluated {n} samples: {metrics}", n=len(samples), metrics=metrics)
    return metrics


def layer_diagnostics(
    student: EncoderModel,
    teacher: EncoderModel,
    projection: Projection,
    layer_map: list[int],
    samples: Sequence[Sample],
) -> dict[str, float]:
    """Mean angular distance and MSE between each projected student layer and its teacher layer."""
    if not samples:
        raise InputError("cannot compute layer diagnostics on an empty dataset")
    student_traces = _traces(student, samples)
    teacher_traces = _traces(teacher, samples)

    diagnostics: dict[str, float] = {}
    for i, teacher_layer in enumerate(layer_map):
        weight = projection[i].data
        projected = np.concatenate([t.ffn_outs[i].data @ weight for t in student_traces])
        target = np.concatenate([t.ffn_outs[teacher_layer - 1].data for t in teacher_traces])
        flat_s = projected.reshape(len(projected), -1)
        flat_t = target.reshape(len(target), -1)
        cosine = np.sum(flat_s * flat_t, axis=-1) / (
            np.linalg.norm(flat_s, axis=-1) * np.linalg.norm(flat_t, axis=-1)
        )
        diagnostics[f"layer{i + 1}_angular"] = float(np.mean(1.0 - cosine))
        diagnostics[f"layer{i + 1}_mse"] = float(np.mean((flat_s - flat_t) ** 2))
    return diagnostics
