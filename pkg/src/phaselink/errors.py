"""Typed error hierarchy.

Every error carries a short machine-readable ``category`` used by the CLI to
pick its exit code, so scripted callers can branch on failure class without
parsing messages.
"""

from __future__ import annotations


class PhaselinkError(Exception):
    """Base class for all package errors."""

    category = "internal"


class ConfigError(PhaselinkError):
    category = "config"


class IntegrationError(PhaselinkError):
    """Numerical integration produced a non-finite or diverging state."""

    category = "integration"


class HistoryUnderflowError(PhaselinkError):
    """A delayed-value lookup reached back before the stored history."""

    category = "integration"


class DegenerateTrajectoryError(PhaselinkError):
    """Trajectory has too little variance for a parameter estimate."""

    category = "data"


class InsufficientDataError(PhaselinkError):
    category = "data"


class WindowTooLargeError(PhaselinkError):
    category = "data"


class TooShortError(PhaselinkError):
    category = "data"


class ConvergenceError(PhaselinkError):
    """An iterative solver did not converge within its iteration budget."""

    category = "numerics"


class SingularSystemError(PhaselinkError):
    category = "numerics"


class DimensionMismatchError(PhaselinkError):
    category = "numerics"


class IndexMismatchError(PhaselinkError):
    """Phase vector length does not match the link enumeration."""

    category = "numerics"


class DivergenceError(PhaselinkError):
    """Closed-loop prediction blew up; ``frame`` is the offending index."""

    category = "prediction"

    def __init__(self, message: str, frame: int | None = None):
        super().__init__(message)
        self.frame = frame


class NoEquilibriumError(PhaselinkError):
    """Order parameter never stabilized within the provided data."""

    category = "targeting"


class BundleError(PhaselinkError):
    """Model bundle is missing, corrupt, or incompatible with this code."""

    category = "bundle"


class SessionError(PhaselinkError):
    category = "session"


class InvalidCommandError(PhaselinkError):
    category = "session"


class PortInUseError(PhaselinkError):
    category = "server"
