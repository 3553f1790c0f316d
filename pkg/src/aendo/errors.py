"""Exception types raised by the analysis routines."""


class AendoError(Exception):
    """Base class for all library errors."""


class BudgetExceeded(AendoError):
    """A preimage tree or search would exceed its node budget."""


class SingularPointError(AendoError):
    """A point where the differential drops rank was met where it is forbidden."""

    def __init__(self, message, level=None):
        super().__init__(message)
        self.level = level


class DegenerateSplitting(AendoError):
    pass


class DivergentSum(AendoError):
    pass


class EmptyDisk(AendoError):
    pass


class NoInSetBranch(AendoError):
    pass


class NotAGraph(AendoError):
    pass


class PreconditionError(AendoError, ValueError):
    pass


class NonConvergent(AendoError):
    pass


class PointOutside(AendoError):
    pass


class ConfigError(AendoError):
    pass
