"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input data or configuration violates a documented precondition."""


class CycleParseError(ValidationError):
    """A drive-cycle CSV file is malformed."""


class ConfigError(ValidationError):
    """A study configuration file is missing keys or has bad values."""


class FitError(RuntimeError):
    """A component model fit failed its quality gate."""


class TranscriptionError(ValueError):
    """The optimal-control problem cannot be written as a conic program."""


class ConvergenceError(RuntimeError):
    """The mass fixed-point loop ran out of iterations.

    Carries the trace of vehicle-mass iterates for diagnosis.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class SweepError(RuntimeError):
    """Every motor size in a sweep was infeasible."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SolverFailure(RuntimeError):
    """The conic solver broke down numerically (not an infeasibility)."""
