"""Exception hierarchy shared by the numerical modules and the runner."""

from __future__ import annotations


class GordinLabError(Exception):
    """Base class for every error raised by gordinlab."""


class DomainError(GordinLabError, ValueError):
    """An argument lies outside the domain of the operation."""


class ShapeError(GordinLabError, ValueError):
    """Array dimensions or orbit lengths do not match."""


class ResolutionError(GordinLabError):
    """A grid or binning is too coarse for the requested computation."""


class PSDError(GordinLabError, ValueError):
    """A covariance matrix is not symmetric positive semi-definite."""


class BlowupError(GordinLabError):
    """A simulated trajectory left the bounded region |x| <= 1e6."""


class InvariantViolation(GordinLabError):
    """A bound that holds exactly was violated by a computation."""


class ConfigError(GordinLabError, ValueError):
    """An experiment configuration is malformed or out of range."""
