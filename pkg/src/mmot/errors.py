"""Exception types raised across the toolkit."""


class MMOTError(Exception):
    """Base class for all toolkit errors."""


class EmptyMeasureError(MMOTError, ValueError):
    pass


class MeasureError(MMOTError, ValueError):
    """Malformed measure: bad weights, duplicate atoms, wrong shapes."""


class MissingAssignmentError(MMOTError, KeyError):
    pass


class ShapeError(MMOTError, ValueError):
    pass


class EvaluationError(MMOTError, ArithmeticError):
    pass


class GradientUnavailableError(MMOTError):
    """No first-variable gradient can be formed at the requested point."""


class InstanceTooLargeError(MMOTError):
    pass


class SolverFailureError(MMOTError):
    """The simplex iteration stalled; ``dump`` holds the last iterate."""

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump or {}


class CertificateInvalidError(MMOTError):
    """A potential tuple violates sum(u_i) <= c; ``point`` names the worst product point."""

    def __init__(self, message, point=None, violation=None):
        super().__init__(message)
        self.point = point
        self.violation = violation


class InfeasiblePlanError(MMOTError, ValueError):
    pass


class ConfigurationError(MMOTError, ValueError):
    pass


class KCapExceededError(MMOTError):
    """A fiber has more tails than the decomposition cap allows."""
