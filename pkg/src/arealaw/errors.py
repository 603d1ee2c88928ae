"""Exception and warning types shared across the package."""


class ArealawError(Exception):
    """Base class for all package errors."""


class DomainError(ArealawError, ValueError):
    """An argument lies outside the domain of an operation."""


class StructuralError(ArealawError, ValueError):
    """Shapes, supports or families do not fit together."""


class GapClosed(ArealawError):
    """The ground state is degenerate (the spectral gap has closed).

    Attributes
    ----------
    s : float or None
        Path parameter at which the gap closed, if known.
    gap : float
        The offending gap value.
    """

    def __init__(self, gap, s=None, message=None):
        self.gap = float(gap)
        self.s = s
        if message is None:
            where = "" if s is None else f" at s={s:.6g}"
            message = f"spectral gap closed{where} (gap={gap:.3e})"
        super().__init__(message)


class NoFeasibleR0(ArealawError):
    """No boundary width R satisfies f_A(R) + 2 eps(R) <= 1/2."""


class ConfigError(ArealawError, ValueError):
    """Invalid experiment configuration."""


class DependencyError(ArealawError):
    """A pipeline stage is missing (or has stale) upstream artifacts."""


class GeometryWarning(UserWarning):
    """The requested geometry makes a construction degenerate."""
