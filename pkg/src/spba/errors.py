"""Exception types raised across the package."""


class SpbaError(Exception):
    """Base class for all package errors."""


class InvalidArgument(SpbaError, ValueError):
    pass


class DegenerateRepresentation(SpbaError, ValueError):
    """Unit vector too close to the north pole of the stereographic chart."""


class InvalidGeometry(SpbaError, ValueError):
    pass


class SingularParameterization(SpbaError, ValueError):
    pass


class ChartSingularity(SpbaError, ValueError):
    """Rotation outside the domain of the CGR chart (angle near pi)."""


class InvalidScenario(SpbaError, ValueError):
    pass


class InvalidConfig(SpbaError, ValueError):
    pass


class Unsupported(SpbaError, NotImplementedError):
    pass


class DimensionMismatch(SpbaError, ValueError):
    pass


class InternalInvariantViolation(SpbaError, RuntimeError):
    pass
