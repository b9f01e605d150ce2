class LrcError(Exception):
    """Base exception for every error raised by lrc_distill."""


class DimensionError(LrcError):
    """Operand shapes are incompatible."""


class ParameterError(LrcError):
    """A scalar parameter is outside its valid range."""


class ContractError(LrcError):
    """A caller violated an operation's precondition."""


class TapeStateError(LrcError):
    """A gradient tape was used outside its one-backward lifecycle."""


class NumericDomainError(LrcError):
    """An input lies outside the mathematical domain of an operation."""


class NumericError(LrcError):
    """A loss term evaluated to a non-finite value."""

    def __init__(self, term: str, value: float) -> None:
        super().__init__(f"Non-finite value for loss term '{term}': {value}")
        self.term = term
        self.value = value


class InputError(LrcError):
    """Malformed data handed to the library."""


class ConfigError(LrcError):
    """Invalid or inconsistent configuration."""

    def __init__(self, message: str, fields: list[str] | None = None) -> None:
        super().__init__(message)
        self.fields = fields or []


class DivergenceError(LrcError):
    """Training produced a non-finite loss."""

    def __init__(self, step: int, value: float) -> None:
        super().__init__(f"Training diverged at step {step}: loss={value}")
        self.step = step
        self.value = value


class CheckpointError(LrcError):
    """A checkpoint could not be written or read back."""


class ComparisonError(LrcError):
    """Run reports cannot be compared with each other."""


class GradientCheckError(LrcError):
    """An analytic gradient disagrees with its finite-difference estimate."""
