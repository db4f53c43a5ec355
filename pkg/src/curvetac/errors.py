"""Exception hierarchy shared by all curvetac modules."""


class CurvetacError(Exception):
    """Base class for all curvetac errors."""


class MeshError(CurvetacError):
    """Mesh parsing or validation failure (non-manifold, degenerate, ...)."""


class PathError(CurvetacError):
    """A surface path could not be constructed (unreachable target, ...)."""


class ZeroGradientError(CurvetacError):
    """Distance-field gradient vanished at the query point."""


class FormatError(CurvetacError):
    """Binary/file format violation (magic, truncation, schema)."""


class ConfigError(CurvetacError):
    """Sensor configuration schema or invariant violation."""


class NumericalError(CurvetacError):
    """Linear solver or other numerical failure."""

    def __init__(self, message: str, residual: float | None = None):
        if residual is not None:
            message = f"{message} (relative residual {residual:.3e})"
        super().__init__(message)
        self.residual = residual
