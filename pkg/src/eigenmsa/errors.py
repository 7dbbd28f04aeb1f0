"""Exception types shared across the package."""


class EigenMSAError(Exception):
    """Base class for all package errors."""


class InvalidArgument(EigenMSAError, ValueError):
    pass


class PreconditionViolated(EigenMSAError):
    pass


class SolverFailure(EigenMSAError, RuntimeError):
    """Eigensolver output failed its residual or orthonormality self-check."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class NearSingular(EigenMSAError, ArithmeticError):
    """Spectral parameter sits numerically on the spectrum."""

    def __init__(self, message, distance=None):
        super().__init__(message)
        self.distance = distance


class AmbiguousNearest(EigenMSAError):
    pass


class ScaleParamError(InvalidArgument):
    """One or more scale-parameter inequalities fail.

    ``violations`` lists the failing inequalities by name.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid scale parameters: " + "; ".join(self.violations))
