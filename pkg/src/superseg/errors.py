"""Exception types raised across the package."""


class SuperSegError(Exception):
    """Base class for all package errors."""


class LayoutMismatch(SuperSegError, ValueError):
    pass


class BadTarget(SuperSegError, ValueError):
    pass


class OutOfBounds(SuperSegError, ValueError):
    pass


class DimMismatch(SuperSegError, ValueError):
    pass


class BadChannel(SuperSegError, ValueError):
    pass


# volume / checkpoint files
class BadMagic(SuperSegError, ValueError):
    pass


class BadVersion(SuperSegError, ValueError):
    pass


class TruncatedFile(SuperSegError, ValueError):
    pass


class DimOverflow(SuperSegError, ValueError):
    pass


class ManifestError(SuperSegError, ValueError):
    pass


class InfeasibleSpec(SuperSegError, ValueError):
    pass


# tinynet
class ShapeMismatch(SuperSegError, ValueError):
    pass


class NonScalarLoss(SuperSegError, ValueError):
    pass


class BadShape(SuperSegError, ValueError):
    pass


# metrics
class NonBinaryInput(SuperSegError, ValueError):
    pass


class EmptyList(SuperSegError, ValueError):
    pass


# harness
class BadK(SuperSegError, ValueError):
    pass


class ConfigError(SuperSegError, ValueError):
    pass


class NumericalDivergence(SuperSegError, RuntimeError):
    pass
