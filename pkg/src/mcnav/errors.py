"""Exception types raised across the package."""


class NavError(ValueError):
    """Base class for domain errors."""


class GimbalLock(NavError):
    pass


class SingularAttitude(NavError):
    pass


class ScheduleGap(NavError):
    pass


class OutOfDomain(NavError):
    pass


class CoincidentBeacon(NavError):
    pass


class DegenerateGeometry(NavError):
    pass


class SingularBasis(NavError):
    pass


class InvalidSpread(NavError):
    pass


class NonPositiveInnovation(NavError):
    pass


class SingularFactor(NavError):
    pass


class MismatchedLengths(NavError):
    pass
