"""Exception types shared across the package."""


class PedflowError(Exception):
    """Base class for all package errors."""


class ConfigError(PedflowError):
    """Invalid configuration file or parameter combination."""


class GeometryError(PedflowError):
    """Inconsistent domain or grid definition."""


class OutsideDomainError(PedflowError):
    """A point lies outside the walkable domain."""


class NumericalError(PedflowError):
    """A solver failed to converge or a stability bound was violated."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
