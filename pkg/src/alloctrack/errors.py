"""Exception types raised across the package."""


class AllocTrackError(Exception):
    """Base class for all library errors."""


class ZeroPulls(AllocTrackError):
    """An empirical quantity was requested for an arm that was never pulled."""


class DimensionMismatch(AllocTrackError, ValueError):
    pass


class DivisionByZeroMass(AllocTrackError, ZeroDivisionError):
    """A distance or parameter needs to divide by a zero probability mass."""


class InvalidDistribution(AllocTrackError, ValueError):
    pass


class AlphabetTooLarge(AllocTrackError, ValueError):
    """Subset enumeration was requested beyond the supported alphabet size."""


class MissingConstant(AllocTrackError, ValueError):
    pass


class NonpositiveBudget(AllocTrackError, ValueError):
    pass


class BudgetTooSmall(AllocTrackError, ValueError):
    pass


class AllZeroParams(AllocTrackError, ValueError):
    pass


class NonconvexObjective(AllocTrackError, ValueError):
    pass


class DegenerateB(AllocTrackError, ValueError):
    pass


class TooManyOutcomes(AllocTrackError, ValueError):
    pass


class ConfigError(AllocTrackError, ValueError):
    """Invalid experiment configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")
