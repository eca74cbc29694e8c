"""Exception types raised across the package."""


class HessBundleError(Exception):
    """Base class for all package errors."""


class ConfigurationError(HessBundleError, ValueError):
    """Inconsistent shapes, degrees or run configuration."""


class DegenerateMetricError(HessBundleError, ArithmeticError):
    """A metric left the positive-definite cone (eigenvalue below the floor)."""


class ConsistencyError(HessBundleError, AssertionError):
    """An internal numerical consistency check failed (e.g. non-Hermitian form)."""


class SnapshotError(HessBundleError, IOError):
    """A field snapshot could not be read or is corrupt."""


class StallError(HessBundleError, RuntimeError):
    """The gradient flow step size underflowed."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state
