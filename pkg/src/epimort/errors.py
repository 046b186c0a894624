"""Exception types shared across the package."""


class EpimortError(Exception):
    """Base class for all package errors."""


class InputError(EpimortError):
    """Invalid or inconsistent user-supplied data."""


class ParameterError(EpimortError):
    """A configuration or model parameter is out of its valid range."""


class ConvergenceError(EpimortError):
    """An iterative fit failed to converge.

    Carries the last iterate and any diagnostics so callers can inspect
    what went wrong.
    """

    def __init__(self, message, last_beta=None, diagnostics=None):
        super().__init__(message)
        self.last_beta = last_beta
        self.diagnostics = diagnostics or {}


class NumericalError(EpimortError):
    """A numerical operation failed (singular matrix, inversion failure...)."""

    def __init__(self, message, **state):
        super().__init__(message)
        self.state = state


class StepSizeError(NumericalError):
    """A fixed-step ODE integration went unstable (negative state detected)."""
