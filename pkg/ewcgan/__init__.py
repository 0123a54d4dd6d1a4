from .errors import (
    ContractError,
    DependencyError,
    DimensionError,
    DivergenceError,
    EstimationError,
    EwcGanError,
    InputError,
    NonFiniteError,
    NumericError,
    UsageError,
)

__version__ = "0.1.0"
