"""
Exception hierarchy for the laboratory.

DomainError covers bad arguments (orderings, off-grid times, non-positive
prices); PreconditionError covers a model that cannot support the requested
check; ConfigError covers the command-line surface.
"""


class DirLabError(Exception):
    """Base class for every error raised by dirlab."""


class DomainError(DirLabError, ValueError):
    pass


class PreconditionError(DirLabError, ValueError):
    pass


class ConfigError(DirLabError, ValueError):
    pass
