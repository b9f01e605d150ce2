"""
Differentiable primitives.

Every function takes Tensors (or plain numbers, treated as constants) and
returns a new Tensor. When a tape is active and any input requires a
gradient, the operation is recorded together with its vector-Jacobian
product. Broadcasting follows numpy rules; the backward pass sums gradients
back down to each input's shape.
"""

import math
from typing import Sequence

import numpy as np
from scipy.special import erf

from lrc_distill.errors import DimensionError, NumericDomainError, ParameterError
from lrc_distill.tensor.tensor import BackwardFn, Tensor, active_tape, as_tensor

_SQRT_2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _result(data: np.ndarray, inputs: tuple[Tensor, ...], backward: BackwardFn) -> Tensor:
    tape = active_tape()
    tracked = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor._wrap(data, requires_grad=tracked)
    if tracked:
        tape.record(out, inputs, backward)  # type: ignore[union-attr]
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` over the axes numpy broadcasting added or stretched."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from e


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------
def add(a: Tensor | float, b: Tensor | float) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), backward)


def sub(a: Tensor | float, b: Tensor | float) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.data - b.data, (a, b), backward)


def mul(a: Tensor | float, b: Tensor | float) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), backward)


def div(a: Tensor | float, b: Tensor | float) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)
    if np.any(b.data == 0.0):
        raise NumericDomainError("div: division by zero")
    out = a.data / b.data

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * out / b.data, b.shape),
        )

    return _result(out, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (-g,)

    return _result(-a.data, (a,), backward)


def square(a: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (2.0 * a.data * g,)

    return _result(a.data * a.data, (a,), backward)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * out,)

    return _result(out, (a,), backward)


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise NumericDomainError("log: input must be strictly positive")

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g / a.data,)

    return _result(np.log(a.data), (a,), backward)


def sqrt(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise NumericDomainError("sqrt: input must be strictly positive")
    out = np.sqrt(a.data)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (0.5 * g / out,)

    return _result(out, (a,), backward)


def gelu(a: Tensor) -> Tensor:
    """Exact GELU, x * Phi(x)."""
    cdf = 0.5 * (1.0 + erf(a.data / _SQRT_2))

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * a.data * a.data)
        return (g * (cdf + a.data * pdf),)

    return _result(a.data * cdf, (a,), backward)


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------
def _expand_reduced(
    g: np.ndarray, shape: tuple[int, ...], axis: int | tuple[int, ...] | None, keepdims: bool
) -> np.ndarray:
    if axis is not None and not keepdims:
        axes = (axis,) if isinstance(axis, int) else axis
        axes = tuple(ax % len(shape) for ax in axes)
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape).copy()


def sum(
    a: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False
) -> Tensor:
    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (_expand_reduced(g, a.shape, axis, keepdims),)

    return _result(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), backward)


def mean(
    a: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False
) -> Tensor:
    count = a.size if axis is None else int(
        np.prod([a.shape[ax] for ax in ((axis,) if isinstance(axis, int) else axis)])
    )

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (_expand_reduced(g, a.shape, axis, keepdims) / count,)

    return _result(np.mean(a.data, axis=axis, keepdims=keepdims), (a,), backward)


def norm(a: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    """Euclidean norm along ``axis``; zero-norm inputs are rejected."""
    out = np.sqrt(np.sum(a.data * a.data, axis=axis, keepdims=True))
    if np.any(out == 0.0):
        raise NumericDomainError("norm: zero-norm vector has no defined gradient")

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * a.data / out,)

    return _result(out if keepdims else np.squeeze(out, axis=axis), (a,), backward)


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Inner product along the last axis."""
    return sum(mul(a, b), axis=-1)


# ---------------------------------------------------------------------------
# Linear algebra and layout
# ---------------------------------------------------------------------------
def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grad_a = np.matmul(g, np.swapaxes(b.data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return _result(np.matmul(a.data, b.data), (a, b), backward)


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    order = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(order))

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (np.transpose(g, inverse).copy(),)

    return _result(np.transpose(a.data, order).copy(), (a,), backward)


def swap_last(a: Tensor) -> Tensor:
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, axes)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = a.data.reshape(tuple(shape)).copy()
    except ValueError as e:
        raise DimensionError(f"reshape: cannot view {a.shape} as {tuple(shape)}") from e

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g.reshape(a.shape),)

    return _result(out, (a,), backward)


def take(a: Tensor, indices: Sequence[int] | np.ndarray, axis: int = 0) -> Tensor:
    """Gather entries of ``a`` along ``axis`` (embedding lookup, pooling)."""
    index = np.asarray(indices, dtype=np.int64)
    axis = axis % a.ndim
    if index.size and (index.min() < 0 or index.max() >= a.shape[axis]):
        raise DimensionError(
            f"take: index out of range for axis {axis} of size {a.shape[axis]}"
        )
    selector: list[slice | np.ndarray] = [slice(None)] * a.ndim
    selector[axis] = index

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros_like(a.data)
        np.add.at(grad, tuple(selector), g)
        return (grad,)

    return _result(a.data[tuple(selector)].copy(), (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = tuple(tensors)
    sizes = [t.shape[axis] for t in parts]
    bounds = np.cumsum([0, *sizes])

    def backward(g: np.ndarray) -> list[np.ndarray]:
        return [
            np.take(g, np.arange(lo, hi), axis=axis)
            for lo, hi in zip(bounds[:-1], bounds[1:], strict=True)
        ]

    return _result(np.concatenate([t.data for t in parts], axis=axis), parts, backward)


# ---------------------------------------------------------------------------
# Normalizations
# ---------------------------------------------------------------------------
def _check_temperature(temperature: float) -> None:
    if not temperature > 0.0:
        raise ParameterError(f"temperature must be > 0, got {temperature}")


def softmax(x: Tensor, temperature: float = 1.0) -> Tensor:
    """Last-axis softmax of x / temperature, stabilized by max subtraction."""
    _check_temperature(temperature)
    x = as_tensor(x)
    z = x.data / temperature
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        inner = np.sum(g * out, axis=-1, keepdims=True)
        return (out * (g - inner) / temperature,)

    return _result(out, (x,), backward)


def log_softmax(x: Tensor, temperature: float = 1.0) -> Tensor:
    _check_temperature(temperature)
    x = as_tensor(x)
    z = x.data / temperature
    shifted = z - z.max(axis=-1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        probs = np.exp(out)
        return ((g - probs * g.sum(axis=-1, keepdims=True)) / temperature,)

    return _result(out, (x,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-12) -> Tensor:
    """Normalize over the last axis, then scale by ``gain`` and shift by ``bias``."""
    if gain.shape != x.shape[-1:] or bias.shape != x.shape[-1:]:
        raise DimensionError(
            f"layer_norm: gain {gain.shape}/bias {bias.shape} do not match {x.shape}"
        )
    n = x.shape[-1]
    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        gxhat = g * gain.data
        grad_x = (inv_std / n) * (
            n * gxhat
            - gxhat.sum(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).sum(axis=-1, keepdims=True)
        )
        return (
            grad_x,
            _unbroadcast(g * xhat, gain.shape),
            _unbroadcast(g, bias.shape),
        )

    return _result(xhat * gain.data + bias.data, (x, gain, bias), backward)


# ---------------------------------------------------------------------------
# Operator overloads
# ---------------------------------------------------------------------------
Tensor.__add__ = lambda self, other: add(self, other)  # type: ignore[method-assign]
Tensor.__radd__ = lambda self, other: add(other, self)  # type: ignore[attr-defined]
Tensor.__sub__ = lambda self, other: sub(self, other)  # type: ignore[attr-defined]
Tensor.__rsub__ = lambda self, other: sub(other, self)  # type: ignore[attr-defined]
Tensor.__mul__ = lambda self, other: mul(self, other)  # type: ignore[attr-defined]
Tensor.__rmul__ = lambda self, other: mul(other, self)  # type: ignore[attr-defined]
Tensor.__truediv__ = lambda self, other: div(self, other)  # type: ignore[attr-defined]
Tensor.__rtruediv__ = lambda self, other: div(other, self)  # type: ignore[attr-defined]
Tensor.__matmul__ = lambda self, other: matmul(self, other)  # type: ignore[attr-defined]
Tensor.__neg__ = lambda self: neg(self)  # type: ignore[attr-defined]
