"""Shared exception types."""


class JumplabError(Exception):
    """Base class for all package errors."""


class GeometryError(JumplabError):
    """Point fails a geometric precondition (e.g. not on the boundary)."""


class DerivativeOrderError(JumplabError):
    """A field was asked for a derivative beyond its declared order."""


class ValidationError(JumplabError):
    """Coefficient data violates a declared invariant."""


class SolverError(JumplabError):
    """A linear or eigenvalue solve failed to converge or is singular."""


class SamplingError(JumplabError):
    """Rejection sampling acceptance rate collapsed; density too peaked."""


class ConfigError(JumplabError):
    """Malformed configuration document."""
