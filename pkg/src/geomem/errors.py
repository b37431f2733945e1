"""Exception hierarchy shared by all geomem modules."""


class GeomemError(Exception):
    """Base class for all library errors."""


class ParameterError(GeomemError):
    """Invalid argument or configuration value; names the offending field."""


class TopologyError(GeomemError):
    """Operation applied to a graph family that does not support it."""


class ShapeError(GeomemError):
    """Tensor shape mismatch; message carries both shapes."""


class DegenerateError(GeomemError):
    """Degenerate input: isolated node, empty loss mask, zero-norm vector, ..."""


class NumericError(GeomemError):
    """Non-finite value encountered mid-computation."""
