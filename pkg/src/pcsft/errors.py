"""Exception hierarchy shared by all modules."""


class PCSFTError(Exception):
    """Base class for all package errors."""


class ValidationError(PCSFTError, ValueError):
    """Invalid input; ``field`` names the offending parameter when known."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class NotSymmetric(ValidationError):
    pass


class NotPSD(ValidationError):
    pass


class ZeroTrace(ValidationError):
    pass


class DimMismatch(ValidationError):
    pass


class NegativeTime(ValidationError):
    pass


class ZeroField(ValidationError):
    pass


class NotOrthonormal(ValidationError):
    pass


class NonPositiveStep(ValidationError):
    pass


class BadChannel(ValidationError):
    pass


class ZeroPower(ValidationError):
    pass


class ZeroThreshold(ValidationError):
    pass


class BadArgs(ValidationError):
    pass


class NoConvergence(PCSFTError, ArithmeticError):
    pass


class SimulationError(PCSFTError, RuntimeError):
    """Runtime failure of a Monte Carlo campaign (CLI exit code 2)."""


class NoClicks(SimulationError):
    pass


class DegenerateRate(SimulationError):
    pass


class InsufficientClicks(SimulationError):
    pass
