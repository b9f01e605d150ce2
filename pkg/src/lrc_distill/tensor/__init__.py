from . import ops
from .gradcheck import GradCheckResult, check_gradients, numerical_gradient
from .tensor import Tape, Tensor, active_tape, as_tensor

__all__ = [
    "GradCheckResult",
    "Tape",
    "Tensor",
    "active_tape",
    "as_tensor",
    "check_gradients",
    "numerical_gradient",
    "ops",
]
