"""Exception hierarchy shared across the package.

Errors are split by who can fix them: UsageError for bad call arguments,
ConfigurationError for inconsistent scenario/center/schedule data,
ConstructionError for sampling procedures that exhaust their draw budget,
ResolutionError for grids too coarse to resolve a query, and
ScheduleRangeError for finite radius tables evaluated past their end.
"""


class FirstVisitError(Exception):
    """Base class for all package errors."""


class UsageError(FirstVisitError):
    """An operation was called with incompatible or malformed arguments."""


class ConfigurationError(FirstVisitError):
    """A scenario, center set, or schedule is internally inconsistent."""


class ConstructionError(FirstVisitError):
    """A randomized construction ran out of admissible candidates."""


class ResolutionError(FirstVisitError):
    """A grid-based diagnostic cannot resolve the requested region."""


class ScheduleRangeError(FirstVisitError):
    """An explicit radius schedule was evaluated beyond its last entry."""
