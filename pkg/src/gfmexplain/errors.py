class ExplainError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class InputError(ExplainError, ValueError):
    """Input validation failure (bad files, bad arguments, unusable series)."""

    exit_code = 2


class NumericalError(ExplainError, ArithmeticError):
    """A numerical routine could not produce a result."""

    exit_code = 3
