from typing import Any, Optional


class EwcGanError(Exception):
    """Base class for every error raised by ewcgan."""

    exit_code: int = 1


class DimensionError(EwcGanError, ValueError):
    exit_code = 1


class InputError(EwcGanError, ValueError):
    exit_code = 2


class ContractError(EwcGanError, ValueError):
    exit_code = 1


class NumericError(EwcGanError, ArithmeticError):
    exit_code = 5


class NonFiniteError(NumericError):
    pass


class EstimationError(NumericError):
    pass


class DivergenceError(NumericError):
    """Raised when a training loss or gradient stops being finite.

    Args:
        message: Human readable description
        diagnostics: Iteration, loss values and parameter norms at the failure point
    """

    exit_code = 4

    def __init__(self, message: str, diagnostics: Optional[dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class UsageError(EwcGanError):
    exit_code = 2


class DependencyError(EwcGanError):
    exit_code = 3
