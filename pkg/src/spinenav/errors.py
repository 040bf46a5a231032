"""Exception hierarchy.

Numerical failures (degenerate data, failed registration) derive from
:class:`NumericalError`; malformed inputs derive from :class:`ValidationError`.
The CLI maps the two families to different exit codes.
"""


class SpinenavError(Exception):
    """Base class for all library errors."""


class NumericalError(SpinenavError):
    pass


class ValidationError(SpinenavError, ValueError):
    pass


class SingularMatrix(NumericalError):
    pass


class DegenerateMotion(NumericalError):
    pass


class NoCorrespondences(NumericalError):
    pass


class CollinearPoints(NumericalError):
    pass


class InsufficientData(ValidationError):
    pass


class NoPath(ValidationError):
    pass


class AmbiguousPath(ValidationError):
    pass


class InvalidPlan(ValidationError):
    pass


class NameMismatch(ValidationError):
    pass


class InvalidParams(ValidationError):
    pass
