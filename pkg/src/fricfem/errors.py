"""Exception types raised by the solver components."""


class FricFemError(Exception):
    """Base class for all package errors."""


class GeometryError(FricFemError):
    """Degenerate surface frame or invalid patch data."""


class ProjectionError(FricFemError):
    """A closest-point or sliding-point Newton solve did not converge."""


class ElementInversionError(FricFemError):
    """A bulk element reached det F <= 0."""


class ConvergenceError(FricFemError):
    """The global Newton loop failed, even after step bisection."""


class SceneError(FricFemError):
    """Invalid scene description."""
