"""Exception hierarchy shared by every solver in the package."""


class AccelError(Exception):
    """Base class for all numerical failures raised by fpaccel."""


class NearBreakdown(AccelError):
    """A new direction is numerically dependent on the current basis."""


class SingularSystem(AccelError):
    """A small dense system could not be solved."""


class RankDeficient(AccelError):
    """A least-squares problem lost column rank."""


class DegenerateDenominator(AccelError):
    """A scalar or vector denominator vanished."""


class StationaryResidual(AccelError):
    """A one-step method received a residual that A maps to zero."""


class Breakdown(AccelError):
    """A Krylov recurrence cannot continue."""


class NoRealRoot(AccelError):
    """A tuning quadratic has no real root."""


class ZeroDirection(AccelError):
    """A directional derivative was requested along the zero vector."""


class CoincidentAtoms(AccelError):
    """Two atoms sit on top of each other."""


class ConfigError(AccelError):
    """Invalid run configuration."""
