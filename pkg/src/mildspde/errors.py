"""Exception types shared across the package.

The CLI maps these onto exit codes: InputError -> 2, ConvergenceError -> 3,
EstimateViolation -> 4.
"""


class InputError(ValueError):
    """Arguments violate a documented precondition."""


class ConvergenceError(RuntimeError):
    """An iterative or adaptive procedure did not reach its tolerance."""

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = list(log) if log is not None else []


class ToleranceNotMet(ConvergenceError):
    """A quadrature could not certify the requested accuracy."""


class EstimateViolation(RuntimeError):
    """A numerically checked inequality failed beyond its statistical margin."""

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = details or {}
