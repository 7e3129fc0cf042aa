"""Exception hierarchy shared by all pvtraj modules.

The CLI maps the three top-level families onto fixed exit codes:
``ConfigError`` -> 1, ``DataError`` -> 2, ``NumericalError`` -> 3.
"""


class PvTrajError(Exception):
    """Base class for every error raised on purpose by this package."""


class ConfigError(PvTrajError, ValueError):
    pass


class DataError(PvTrajError, ValueError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(DataError):
    pass


class ValidationError(DataError):
    pass


class EmptyDatasetError(DataError):
    pass


class NumericalError(PvTrajError, ArithmeticError):
    pass


class DomainError(NumericalError, ValueError):
    pass


class DegenerateStateError(NumericalError):
    pass


class NotPSDError(NumericalError, ValueError):
    pass


class InsufficientDataError(NumericalError):
    pass
