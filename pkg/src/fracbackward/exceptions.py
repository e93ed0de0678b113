"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class FracBackwardError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(FracBackwardError, ValueError):
    """Invalid parameter (order, smoothness index, tolerance, ...)."""


class DomainError(FracBackwardError, ValueError):
    """Argument outside the supported domain (x > 0, t <= 0, d >= 8, ...)."""


class ConfigurationError(FracBackwardError, ValueError):
    """Objects that must share a spectral domain do not."""


class NoRootError(FracBackwardError):
    """The discrepancy equation has no root for the requested target."""


class DegenerateNoiseError(FracBackwardError):
    """The noise level is too large relative to the data to regularize.

    ``sentinel`` carries the parameter value a caller may record (``0`` for
    truncation levels).
    """

    def __init__(self, message: str, sentinel: int = 0) -> None:
        super().__init__(message)
        self.sentinel = sentinel
