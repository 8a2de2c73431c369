"""Exception types raised across the package."""


class QTrackError(Exception):
    """Base class for all qtrack errors."""


class DimensionError(QTrackError, ValueError):
    pass


class UncontrollableError(QTrackError, ValueError):
    pass


class InvalidCostError(QTrackError, ValueError):
    pass


class DivergedState(QTrackError, RuntimeError):
    """Simulated state norm exceeded the divergence guard."""


class NonIntegralCount(QTrackError, ValueError):
    pass


class StructureViolation(QTrackError, ValueError):
    """A structural-zero entry of H is numerically nonzero."""


class NotPositiveDefinite(QTrackError, ValueError):
    pass


class MaxIterationsExceeded(QTrackError, RuntimeError):
    pass


class ExcitationDeficient(QTrackError, RuntimeError):
    """Regression matrix does not have full column rank."""


class ZeroOracle(QTrackError, ValueError):
    pass
