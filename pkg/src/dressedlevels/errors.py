"""Exception types shared across the package."""


class DressedLevelsError(Exception):
    """Base class for all package errors."""


class ConfigurationError(DressedLevelsError, ValueError):
    """A scenario, trap or probe description is not physically valid."""


class PreconditionError(DressedLevelsError, ValueError):
    """An argument violates the documented contract of an operation."""


class SymmetryViolationError(DressedLevelsError):
    """A connected block mixes states of different conserved projection."""


class ConvergenceError(DressedLevelsError, ArithmeticError):
    """An iterative numeric routine hit its iteration cap.

    ``diagnostics`` carries whatever the routine knew when it gave up.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class FitError(DressedLevelsError):
    """Peak fit failed. ``best`` holds the best-so-far parameters, if any."""

    def __init__(self, message, best=None, report=None):
        super().__init__(message)
        self.best = best
        self.report = report
