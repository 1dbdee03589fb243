"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: ``ConfigError`` -> 1, ``DataError`` -> 2,
``NumericError`` -> 3.
"""


class IntradayVolError(Exception):
    """Base class for all package errors."""


class ConfigError(IntradayVolError, ValueError):
    """Invalid configuration, dimensions or parameter values."""


class StationarityError(ConfigError):
    pass


class DataError(IntradayVolError, ValueError):
    """Input data violates a precondition."""


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OrderingError(DataError):
    pass


class GapError(DataError):
    pass


class GridError(DataError):
    pass


class AlignmentError(DataError):
    pass


class CoverageError(DataError):
    pass


class DomainError(DataError):
    pass


class DependencyError(DataError):
    pass


class NumericError(IntradayVolError, ArithmeticError):
    """Numerical failure: non-finite state, divergence, singular systems."""


class DivergenceError(NumericError):
    pass


class RankError(NumericError):
    pass


class DegenerateError(NumericError):
    pass


class SingularityError(NumericError):
    pass


class OptimizerError(NumericError):
    def __init__(self, message, trace=None):
        self.trace = trace or []
        super().__init__(message)
