"""Exception types shared across the package."""


class NetformError(Exception):
    """Base class for all errors raised by netform."""


class ArgumentError(NetformError, ValueError):
    """An argument is outside the domain of the operation."""


class ConfigError(NetformError, ValueError):
    """A configuration (payoff table, simulation config, plan) is invalid."""


class SizeLimitError(NetformError):
    """An exhaustive computation was requested above its size limit."""

    def __init__(self, what, n, limit):
        super().__init__(f"{what}: N={n} exceeds the exhaustive limit N<={limit}")
        self.n = n
        self.limit = limit


class DegenerateParameterError(NetformError, ValueError):
    """Parameters sit on a boundary where the closed form is not defined."""


class ConsistencyError(NetformError):
    """Two observations cannot both hold (e.g. an unreachable transition)."""


class NumericalError(NetformError, ArithmeticError):
    """An iterative numerical method failed to converge."""
