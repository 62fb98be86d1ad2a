"""Exception taxonomy shared across the package.

The CLI maps these onto stable exit codes, so library code should raise
the most specific class that applies rather than bare ValueError.
"""


class HrvBoldError(Exception):
    """Base class for all package errors."""


class ValidationError(HrvBoldError):
    """A configuration, argument, or invariant check failed (exit code 2)."""


class DataError(HrvBoldError):
    """On-disk data is missing, malformed, or inconsistent (exit code 3)."""


class DivergenceError(HrvBoldError):
    """Training produced a non-finite loss (exit code 4)."""
