"""
opolock.errors

Exception hierarchy shared by the library and the CLI. The CLI maps
ConfigError to exit code 2 and NumericalError (or I/O failure) to exit code 1.
"""
from __future__ import annotations


class OpoLockError(Exception):
    """Base class for every error raised by opolock."""


class ConfigError(OpoLockError):
    """A configuration field failed validation."""

    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


class NumericalError(OpoLockError):
    """A computation could not produce a trustworthy number."""


class FitDegenerateError(NumericalError):
    """The determinant interpolation was ill-conditioned."""


class ResidualTooLargeError(NumericalError):
    """A polished threshold root does not satisfy |det| within tolerance."""


class NegativeDiscriminantError(NumericalError):
    """The closed-form threshold discriminant is negative (outside the locking zone)."""


class NormalizationError(NumericalError):
    """The standard-OPO reference threshold is undefined (lossless cavity)."""


class WindowTooNarrowError(NumericalError):
    """The cavity-length search window cannot bracket a minimum."""


class NotInZoneError(NumericalError):
    """The requested point is not inside the locking zone."""


class StageOutputError(NumericalError):
    """A pipeline stage finished without leaving its result object."""
