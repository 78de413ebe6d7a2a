"""Exception types raised across the package."""


class KahanError(Exception):
    """Base class for all errors raised by :mod:`kahanmaps`."""


class DimensionError(KahanError, ValueError):
    """Array shapes do not agree with the dimension of the vector field."""


class SingularStep(KahanError, ArithmeticError):
    """The linear system of an implicit step is numerically singular.

    Usually the step size is too large for the current point, or the point lies
    on the singular set of the birational map.
    """

    def __init__(self, message, pivot=None, scale=None):
        super().__init__(message)
        self.pivot = pivot
        self.scale = scale


class DivisionByZero(KahanError, ZeroDivisionError):
    """A modified integral or density has a vanishing denominator at the point."""


class NoConvergence(KahanError, RuntimeError):
    """A fixed-point iteration did not reach its tolerance within the cap."""

    def __init__(self, message, iterations=None, defect=None):
        super().__init__(message)
        self.iterations = iterations
        self.defect = defect


class ConfigError(KahanError, ValueError):
    """A run configuration is malformed; ``field`` names the offending entry."""

    def __init__(self, message, field=None, line=None):
        where = []
        if field is not None:
            where.append(f"field {field!r}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.field = field
        self.line = line
