"""Exception hierarchy shared by the geometry, flow, solver and runner layers."""


class ExtflowError(Exception):
    """Base class for all errors raised by extflow."""


class MetricDegenerate(ExtflowError):
    """A metric node is singular or too badly conditioned to continue."""

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class NonFinite(ExtflowError):
    """NaN or Inf detected in a field."""

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class NonPositive(ExtflowError):
    """A field that must be strictly positive is not."""


class NoConvergence(ExtflowError):
    """Iterative minimization stopped above tolerance.

    The best iterate is attached as ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class LinearSolveFailure(ExtflowError):
    """Inverse iteration stagnated or its inner solve failed."""


class ParamDomain(ExtflowError):
    """A parameter lies outside the domain where a quantity is defined."""


class InsufficientSamples(ExtflowError):
    """Too few (or non-uniform) time samples for a finite-difference derivative."""


class ConfigInvalid(ExtflowError):
    """Configuration rejected by strict validation; ``path`` names the field."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
