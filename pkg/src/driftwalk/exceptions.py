"""Exception types raised across the package."""


class DriftwalkError(Exception):
    """Base class for all package errors."""


class DominanceGapError(DriftwalkError):
    """The truncated overshoot ``E[Z' 1_(0,alpha]]`` is not below ``lambda * (1 - alpha)``."""


class EmptySampleError(DriftwalkError, ValueError):
    pass


class CensoringError(DriftwalkError):
    """Too many trajectories did not return before the horizon."""


class ScheduleValidationError(DriftwalkError):
    pass


class DomainError(DriftwalkError, ValueError):
    pass


class NumericalRankError(DriftwalkError, ValueError):
    """Basis is numerically singular."""


class RankError(DriftwalkError, ValueError):
    """Integer matrix does not have full row rank."""


class ExplosionError(DriftwalkError):
    """Enumeration produced more candidates than the configured cap."""


class ConfigParseError(DriftwalkError, ValueError):
    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
