"""Exception types raised across galmem."""


class GalmemError(Exception):
    """Base class for all library errors."""


class UnverifiedGenerator(GalmemError, ValueError):
    pass


class DegreeTooLarge(GalmemError, ValueError):
    pass


class OrbitTooLong(GalmemError, ValueError):
    pass


class LengthMismatch(GalmemError, ValueError):
    pass


class ConfigInvalid(GalmemError, ValueError):
    pass


class ScheduleViolation(GalmemError, RuntimeError):
    pass


class DimensionMismatch(GalmemError, ValueError):
    pass


class EmptyBundle(GalmemError, ValueError):
    pass


class DegenerateFit(GalmemError, ValueError):
    pass


class RoleAbsent(GalmemError, KeyError):
    pass


class DegenerateFactual(GalmemError, ZeroDivisionError):
    pass


class NotFound(GalmemError, LookupError):
    """A read or traversal produced no winner.

    ``result`` carries the VoteResult (or None) that led to the failure.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class AbductionFailed(NotFound):
    pass


class SnapshotError(GalmemError, ValueError):
    pass
