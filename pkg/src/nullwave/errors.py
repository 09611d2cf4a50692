"""Exception types raised across the package."""


class NullwaveError(Exception):
    """Base class for all package errors."""


class NotNull(NullwaveError):
    """A tensor fails the null condition.

    ``coefficients`` maps symbol-coefficient labels (``"1"``, ``"cos2"``, ...)
    to their nonzero exact values.
    """

    def __init__(self, message, coefficients=None):
        super().__init__(message)
        self.coefficients = dict(coefficients or {})


class SingularBasis(NullwaveError):
    pass


class UnknownForm(NullwaveError, KeyError):
    pass


class ParseError(NullwaveError):
    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class ConfigInvalid(NullwaveError):
    pass


class InsufficientHistory(NullwaveError):
    pass


class SupportViolation(NullwaveError):
    pass


class Breakdown(NullwaveError):
    """The solution left the small-data regime; raised by the time stepper."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class DenominatorCollapse(Breakdown):
    pass


class GradientBlowup(Breakdown):
    pass


class FixedPointDivergence(Breakdown):
    pass
