"""Exception types shared across the package."""


class CovlocError(Exception):
    """Base class for package-specific errors."""


class GeometryError(CovlocError, ValueError):
    """Degenerate geometry, e.g. an emitter coincident with an antenna."""


class ConfigError(CovlocError, ValueError):
    """Invalid configuration input. ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class BoundUndefinedError(CovlocError, ValueError):
    """The lower bound is not defined for the requested scenario."""


class RankDeficiencyError(CovlocError, ValueError):
    """Information matrix is numerically singular.

    ``directions`` holds the parameter-space eigenvectors associated with
    the deficient eigenvalues.
    """

    def __init__(self, message, directions=None):
        self.directions = directions
        super().__init__(message)


class NumericalError(CovlocError, RuntimeError):
    """A numerical operation failed (singular solve, non-convergence)."""
