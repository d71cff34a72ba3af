"""Exception and warning types shared across the package."""


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class ParseError(ValidationError):
    """Raised when a sample file cannot be parsed.

    The offending 1-based line number is stored in ``lineno``.
    """

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class DivergenceError(RuntimeError):
    """Raised when an iterative solver produces non-finite values.

    ``last_good`` carries the most recent finite state when one exists
    (for the outer training loop this is the last feasible parameter set).
    """

    def __init__(self, message, last_good=None):
        super().__init__(message)
        self.last_good = last_good


class SolverQualityWarning(UserWarning):
    """Emitted when a numerical result is usable but suspicious."""
