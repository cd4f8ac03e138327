"""Exception hierarchy shared by all modules."""


class MVIEError(Exception):
    """Base class for all package errors."""


class InvalidMedium(MVIEError, ValueError):
    pass


class RegimeViolation(MVIEError):
    """Raised when a medium is outside the admissible moving-speed regime."""


class DegenerateShape(MVIEError, ValueError):
    """Raised when a shape is not resolved by the requested lattice."""


class ProbeInsideDomain(MVIEError, ValueError):
    pass


class SingularPoint(MVIEError, ValueError):
    """Raised when a kernel is evaluated at its singularity."""


class DimensionMismatch(MVIEError, ValueError):
    pass


class BadDirection(MVIEError, ValueError):
    pass


class TooCloseToSupport(MVIEError, ValueError):
    """Raised when an off-grid evaluation point is within one cell of the body."""


class SolverError(MVIEError):
    """Base class for iterative solver failures.

    Carries the partial :class:`~mvie.scatter.SolveReport` when available.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NotContractive(SolverError):
    pass


class MaxIterationsExceeded(SolverError):
    pass


class NotConverged(SolverError):
    pass


class ConfigError(MVIEError):
    """Raised for malformed run configurations; ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
