"""Exception hierarchy.

The CLI maps these onto exit codes: validation problems exit with 2,
failed rank tests (infeasibility) with 3 and numerical failures with 4.
"""


class NetDualityError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ValidationError(NetDualityError, ValueError):
    exit_code = 2


class DimensionError(ValidationError):
    """Matrix shapes do not fit together."""


class InputError(ValidationError):
    """Non-finite entries, bad parameters and similar."""


class MatrixFormatError(ValidationError):
    """Malformed matrix text; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NotHurwitzError(ValidationError):
    """Raised when an infinite-horizon quantity is requested for an unstable A."""


class InfeasibleError(NetDualityError):
    """A rank condition needed by the request does not hold."""

    exit_code = 3


class UndefinedEnergyError(InfeasibleError):
    pass


class NumericalError(NetDualityError, ArithmeticError):
    """Divergence, failed cross-checks, residuals above tolerance."""

    exit_code = 4

    def __init__(self, message, time=None):
        self.time = time
        super().__init__(message)
