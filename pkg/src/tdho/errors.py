"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class ParameterError(ValueError):
    """A model parameter is invalid (e.g. it would make omega^2 non-positive)."""


class IntegrationError(RuntimeError):
    """The adaptive stepper failed (step-size underflow, non-finite state)."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, achieved_error=None):
        super().__init__(message)
        self.achieved_error = achieved_error


class RefinementRequired(RuntimeError):
    """A sampling grid is too coarse for the requested interpolation budget."""

    def __init__(self, message, suggested_points=None):
        super().__init__(message)
        self.suggested_points = suggested_points
