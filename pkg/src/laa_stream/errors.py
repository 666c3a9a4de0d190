class LaaStreamError(Exception):
    """Base class for package errors."""


class DomainError(LaaStreamError, ValueError):
    """An input lies outside the domain of an operation."""


class SolverError(LaaStreamError, RuntimeError):
    """An iterative solver failed to converge."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ConfigError(LaaStreamError, ValueError):
    """Invalid scenario configuration. ``key`` holds the offending dotted key."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
