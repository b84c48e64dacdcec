"""Exception types shared across the engine."""


class IvosegError(Exception):
    """Base class for all engine errors."""


class ShapeError(IvosegError, ValueError):
    """Operands have incompatible or invalid dimensions."""


class DegenerateColumnError(IvosegError, ValueError):
    """A normalized column has no eligible entries."""


class InputError(IvosegError, ValueError):
    """An input value is outside the operation's domain."""


class AnnotationError(IvosegError, ValueError):
    """Scribble input is missing or malformed."""


class ProtocolError(IvosegError, RuntimeError):
    """An interaction-round precondition was violated."""


class LoadError(IvosegError, ValueError):
    """On-disk data is missing or inconsistent."""


class CalibrationError(IvosegError, RuntimeError):
    """Parameter search hit a non-finite objective value."""
