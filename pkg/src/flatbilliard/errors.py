"""Exception hierarchy shared by all modules."""


class BilliardError(Exception):
    """Base class for every error raised by this package."""


class InvalidParams(BilliardError, ValueError):
    pass


class GeometryError(BilliardError):
    pass


class OutOfRange(BilliardError, ValueError):
    pass


class NumericalError(BilliardError):
    """Base for failures of an iterative numerical procedure."""


class GrazingCollision(NumericalError):
    pass


class NumericalLoss(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class Unclassified(NumericalError):
    pass


class DomainError(NumericalError, ValueError):
    pass


class ResolutionLimit(NumericalError):
    pass


class BadRange(BilliardError, ValueError):
    pass


class NonPositiveValues(BilliardError, ValueError):
    pass


class InsufficientTail(NumericalError):
    pass


class ConfigError(BilliardError, ValueError):
    pass
