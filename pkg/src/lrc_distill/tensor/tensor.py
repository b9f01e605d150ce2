from contextvars import ContextVar
from typing import Callable, Iterable, Sequence

import numpy as np

from lrc_distill.errors import ContractError, TapeStateError

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]

# Each thread starts with an empty context, so frozen-model evaluation in
# worker threads never records onto the training tape.
_active_tape: ContextVar["Tape | None"] = ContextVar("lrc_active_tape", default=None)


class Tensor:
    """
    Dense float64 array that can take part in a reverse-mode gradient tape.

    Storage is a private, C-contiguous numpy array. Operations never mutate
    their inputs; reshape and transpose produce copies.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_tape")

    # Make `ndarray <op> Tensor` defer to the Tensor's reflected operator.
    __array_ufunc__ = None

    def __init__(
        self,
        data: object,
        *,
        requires_grad: bool = False,
        name: str | None = None,
    ) -> None:
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.array(data, dtype=np.float64, order="C")
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._tape: Tape | None = None

    @classmethod
    def _wrap(cls, data: np.ndarray, *, requires_grad: bool) -> "Tensor":
        tensor = cls.__new__(cls)
        tensor.data = np.asarray(data, dtype=np.float64, order="C")
        tensor.requires_grad = requires_grad
        tensor.grad = None
        tensor.name = None
        tensor._tape = None
        return tensor

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        """Return a constant copy that no tape will differentiate through."""
        return Tensor._wrap(self.data.copy(), requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Backpropagate from this scalar through the tape that produced it."""
        if self._tape is None:
            raise ContractError("backward() needs a loss recorded on an active tape")
        self._tape.backward(self)

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"


class _Record:
    __slots__ = ("output", "inputs", "backward")

    def __init__(
        self, output: Tensor, inputs: tuple[Tensor, ...], backward: BackwardFn
    ) -> None:
        self.output = output
        self.inputs = inputs
        self.backward = backward


class Tape:
    """
    Ordered record of primitive operations for one forward episode.

    Records are appended as operations execute, so they are in topological
    order by construction. A tape supports exactly one backward pass
    (``backward`` or ``gradient``); ``reset`` starts a new episode.
    """

    def __init__(self) -> None:
        self._records: list[_Record] = []
        self._produced: set[int] = set()
        self._consumed = False
        self._tokens: list = []

    def __enter__(self) -> "Tape":
        if self._consumed:
            raise TapeStateError("tape was already consumed by a backward pass")
        self._tokens.append(_active_tape.set(self))
        return self

    def __exit__(self, *_exc: object) -> None:
        _active_tape.reset(self._tokens.pop())

    def __len__(self) -> int:
        return len(self._records)

    @property
    def consumed(self) -> bool:
        return self._consumed

    def reset(self) -> None:
        self._records.clear()
        self._produced.clear()
        self._consumed = False

    def record(
        self, output: Tensor, inputs: tuple[Tensor, ...], backward: BackwardFn
    ) -> None:
        if self._consumed:
            raise TapeStateError("cannot record onto a consumed tape; call reset()")
        self._records.append(_Record(output, inputs, backward))
        self._produced.add(id(output))
        output._tape = self

    def backward(self, loss: Tensor, leaves: Iterable[Tensor] | None = None) -> None:
        """
        Accumulate dLoss/dLeaf into ``grad`` of every participating leaf.

        Leaves listed in ``leaves`` that do not participate get a zero grad.
        """
        adjoints = self._propagate(loss)
        for record in self._records:
            for tensor in record.inputs:
                if id(tensor) in self._produced or not tensor.requires_grad:
                    continue
                adjoint = adjoints.pop(id(tensor), None)
                if adjoint is not None:
                    _accumulate(tensor, adjoint)
        for leaf in leaves or ():
            if leaf.grad is None:
                leaf.grad = np.zeros_like(leaf.data)

    def gradient(self, loss: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
        """Return dLoss/dT for each T in ``wrt`` without touching any ``grad``."""
        adjoints = self._propagate(loss)
        return [
            adjoints.get(id(tensor), np.zeros_like(tensor.data)).copy()
            for tensor in wrt
        ]

    def _propagate(self, loss: Tensor) -> dict[int, np.ndarray]:
        if self._consumed:
            raise TapeStateError("tape already ran its backward pass; call reset()")
        if loss.ndim != 0:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._tape is not self:
            raise ContractError("loss was not recorded on this tape")
        self._consumed = True

        adjoints: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
        for record in reversed(self._records):
            upstream = adjoints.get(id(record.output))
            if upstream is None:
                continue
            for tensor, grad in zip(
                record.inputs, record.backward(upstream), strict=True
            ):
                if grad is None or not tensor.requires_grad:
                    continue
                previous = adjoints.get(id(tensor))
                adjoints[id(tensor)] = grad if previous is None else previous + grad
        return adjoints


def _accumulate(tensor: Tensor, grad: np.ndarray) -> None:
    grad = np.asarray(grad, dtype=np.float64).reshape(tensor.shape)
    tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad


def active_tape() -> Tape | None:
    return _active_tape.get()


def as_tensor(value: "Tensor | object") -> Tensor:
    """Wrap plain numbers and arrays as gradient constants."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)
