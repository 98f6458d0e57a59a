"""Exception hierarchy shared by all pxsym modules."""


class PxsymError(Exception):
    """Base class for every error raised by pxsym."""


# grid
class InvalidRadii(PxsymError, ValueError):
    pass


class ResolutionTooSmall(PxsymError, ValueError):
    pass


class GridMismatch(PxsymError, ValueError):
    pass


# spaces
class ZeroFunction(PxsymError, ValueError):
    pass


class InvalidProblemData(PxsymError, ValueError):
    pass


# polarization
class DimensionMismatch(PxsymError, ValueError):
    pass


class AsymmetricDomain(PxsymError, ValueError):
    pass


class NonGridReflection(PxsymError, ValueError):
    pass


class NoConvergence(PxsymError, RuntimeError):
    pass


# solvers
class Diverged(PxsymError, RuntimeError):
    pass


class NonFiniteEncountered(PxsymError, FloatingPointError):
    pass


class PathCollapse(PxsymError, RuntimeError):
    pass


class Unconverged(PxsymError, RuntimeError):
    pass


class DegenerateMoment(PxsymError, ValueError):
    pass


# spectrum
class ExponentBelowTwo(PxsymError, ValueError):
    pass


class MissingDerivative(PxsymError, ValueError):
    pass


class SingularMass(PxsymError, ValueError):
    pass


class IterationStall(PxsymError, RuntimeError):
    pass


class NotPlanarOrAxisymmetric(PxsymError, ValueError):
    pass


# diagnostics
class RangeError(PxsymError, ValueError):
    pass


class MuOutOfRange(PxsymError, ValueError):
    pass


class QOutOfRange(PxsymError, ValueError):
    pass


# cli
class ConfigError(PxsymError, ValueError):
    def __init__(self, key, message=None):
        self.key = key
        super().__init__(message or f"invalid or missing config key: {key!r}")


class MissingRun(PxsymError, FileNotFoundError):
    pass
