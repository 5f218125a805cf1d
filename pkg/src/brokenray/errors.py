"""Exception types raised across the package."""


class BrokenRayError(Exception):
    """Base class for all package errors."""


class ValidationError(BrokenRayError):
    """Bad input; the CLI maps these to exit code 2."""


class NumericalError(BrokenRayError):
    """Numerical failure; the CLI maps these to exit code 3."""


class SchemaError(ValidationError):
    pass


class ParseError(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class NotATubeScenario(ValidationError):
    pass


class PointNotOnBoundary(ValidationError):
    pass


class NoDoubleHit(NumericalError):
    pass


class LeftDomain(NumericalError):
    pass


class EventLocalizationFailure(NumericalError):
    pass


class TangentialDirection(NumericalError):
    pass


class ReflectionPatternChanged(NumericalError):
    pass


class RayDidNotExit(NumericalError):
    pass


class ObstacleInTheWay(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass
