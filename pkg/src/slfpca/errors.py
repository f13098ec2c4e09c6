"""Exception hierarchy shared by the library and the CLI."""


class SlfpcaError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(SlfpcaError, ValueError):
    pass


class OutOfDomainError(InvalidArgumentError):
    pass


class DataError(SlfpcaError):
    """Raised for malformed or inconsistent input files."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalSingularityError(SlfpcaError, ArithmeticError):
    pass
