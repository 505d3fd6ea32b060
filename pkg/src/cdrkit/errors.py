"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 2, CapacityError -> 3,
DiagnosticError -> 4.
"""


class CdrError(Exception):
    """Base class for all cdrkit errors."""


class ConfigError(CdrError):
    """Invalid configuration or malformed input file."""


class CapacityError(CdrError):
    """A requested computation exceeds a configured resource cap."""


class DiagnosticError(CdrError):
    """A numerical diagnostic failed (degenerate chain, rank-deficient fit, ...)."""
