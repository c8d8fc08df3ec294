"""Exception hierarchy shared by all fracplane modules."""


class FracplaneError(Exception):
    """Base class for all errors raised by this package."""


class EmptyCap(FracplaneError):
    pass


class EmptyRegion(FracplaneError):
    pass


class OutOfRange(FracplaneError, ValueError):
    pass


class CapExceeded(FracplaneError):
    pass


class CoincidentPoints(FracplaneError, ValueError):
    pass


class OnBoundary(FracplaneError, ValueError):
    pass


class NonpositiveMeasure(FracplaneError, ValueError):
    pass


class NonpositiveRate(FracplaneError, ValueError):
    pass


class NonpositiveHeight(FracplaneError, ValueError):
    pass


class ConvergenceFailure(FracplaneError):
    pass


class ProfileUnavailable(FracplaneError):
    pass


class QuadratureFailure(FracplaneError):
    pass


class RangeExit(FracplaneError):
    """A solver state left the admissible interval of the nonlinearity."""


class PicardDivergence(FracplaneError):
    pass


class TooShort(FracplaneError):
    """A trajectory does not span the requested time window."""


class NetFailure(FracplaneError):
    pass


class PreconditionUnmet(FracplaneError):
    """A theorem-level hypothesis does not hold for the given data.

    ``hypothesis`` names the violated condition so callers can report it.
    """

    def __init__(self, message, hypothesis=None):
        super().__init__(message)
        self.hypothesis = hypothesis


class GeometryViolation(FracplaneError):
    pass


class ConfigError(FracplaneError):
    exit_code = 2


class NumericalFailure(FracplaneError):
    exit_code = 3


class CheckFailure(FracplaneError):
    exit_code = 1
