from typing import Callable, Mapping

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field

from lrc_distill.tensor.tensor import Tape, Tensor

LossFn = Callable[[Mapping[str, Tensor]], Tensor]


class GradCheckResult(BaseModel):
    """Worst analytic-vs-numeric disagreement for one input of one operation."""

    op: str = Field(description="Name of the checked operation")
    input_name: str = Field(description="Input the gradient was taken against")
    max_error: float = Field(ge=0.0, description="Largest scaled error over elements")
    index: tuple[int, ...] = Field(description="Element index of the largest error")
    analytic: float
    numeric: float
    passed: bool


def numerical_gradient(
    fn: LossFn,
    inputs: Mapping[str, np.ndarray],
    target: str,
    h: float = 1e-6,
) -> np.ndarray:
    """
    Central finite-difference estimate of d fn / d inputs[target].

    ``fn`` is evaluated without a tape, so no operation is recorded.
    """
    base = {name: np.array(value, dtype=np.float64) for name, value in inputs.items()}
    point = base[target]
    grad = np.zeros_like(point)

    def evaluate() -> float:
        return fn({name: Tensor(value) for name, value in base.items()}).item()

    for index in np.ndindex(point.shape):
        original = point[index]
        point[index] = original + h
        f_plus = evaluate()
        point[index] = original - h
        f_minus = evaluate()
        point[index] = original
        grad[index] = 0.5 * (f_plus - f_minus) / h
    return grad


def analytic_gradient(
    fn: LossFn, inputs: Mapping[str, np.ndarray], wrt: list[str]
) -> dict[str, np.ndarray]:
    tensors = {
        name: Tensor(value, requires_grad=name in wrt, name=name)
        for name, value in inputs.items()
    }
    with Tape() as tape:
        loss = fn(tensors)
    leaves = [tensors[name] for name in wrt]
    tape.backward(loss, leaves=leaves)
    return {name: tensors[name].grad for name in wrt}  # type: ignore[misc]


def check_gradients(
    op: str,
    fn: LossFn,
    inputs: Mapping[str, np.ndarray],
    *,
    wrt: list[str] | None = None,
    h: float = 1e-6,
    rtol: float = 1e-4,
    atol: float = 1e-7,
    corrupt: float = 1.0,
) -> list[GradCheckResult]:
    """
    Compare tape gradients of ``fn`` with central finite differences.

    An element passes when ``|a - n| <= atol`` or
    ``|a - n| / max(|a|, |n|) <= rtol``. The reported error is
    ``|a - n| / max(|a|, |n|, atol / rtol)``, which is at most ``rtol``
    exactly when the element passes. ``corrupt`` scales the analytic
    gradient and exists for fault-injection tests.
    """
    names = list(wrt or inputs.keys())
    analytic = analytic_gradient(fn, inputs, names)
    floor = atol / rtol
    results: list[GradCheckResult] = []

    for name in names:
        computed = analytic[name] * corrupt
        numeric = numerical_gradient(fn, inputs, name, h=h)
        scale = np.maximum(np.maximum(np.abs(computed), np.abs(numeric)), floor)
        errors = np.abs(computed - numeric) / scale
        worst = np.unravel_index(int(np.argmax(errors)), errors.shape) if errors.size else ()
        max_error = float(errors[worst]) if errors.size else 0.0
        result = GradCheckResult(
            op=op,
            input_name=name,
            max_error=max_error,
            index=tuple(int(i) for i in worst),
            analytic=float(computed[worst]) if errors.size else 0.0,
            numeric=float(numeric[worst]) if errors.size else 0.0,
            passed=max_error <= rtol,
        )
        if not result.passed:
            logger.warning(
                "Gradient mismatch op={op} input={name} index={index} "
                "analytic={analytic:.6e} numeric={numeric:.6e}",
                op=op,
                name=name,
                index=result.index,
                analytic=result.analytic,
                numeric=result.numeric,
            )
        results.append(result)
    return results
