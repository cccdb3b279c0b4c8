"""Exception types shared across the package."""


class CfsimError(Exception):
    """Base class for all package errors."""


class ValidationError(CfsimError, ValueError):
    """A circuit, protocol spec or run configuration is malformed."""


class NullStateError(CfsimError, ValueError):
    """Normalization of a state with (numerically) zero norm."""


class UnconvergedError(CfsimError, RuntimeError):
    """Richardson extrapolation did not settle within tolerance."""

    def __init__(self, message, site=None, residual=None):
        super().__init__(message)
        self.site = site
        self.residual = residual


class TooLargeError(CfsimError, ValueError):
    """Exact joint simulation requested above the site cap."""
