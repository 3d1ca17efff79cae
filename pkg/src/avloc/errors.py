"""Exception types shared across the package."""


class AvlocError(Exception):
    """Base class for all package errors."""


class ShapeError(AvlocError, ValueError):
    """Operand shapes are incompatible for the requested operation."""


class GeometryError(AvlocError, ValueError):
    """A convolution/pooling geometry would produce an empty output."""


class GraphError(AvlocError, RuntimeError):
    """Misuse of the compute graph (e.g. backward on a non-scalar)."""


class GradientError(AvlocError, RuntimeError):
    """A non-finite gradient was encountered during optimization."""


class ConfigurationError(AvlocError, ValueError):
    """An invalid configuration value or combination."""


class FormatError(AvlocError, ValueError):
    """A file could not be parsed; carries a byte or line offset when known."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset
