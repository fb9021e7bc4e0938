"""Exception hierarchy shared across the toolkit.

The CLI maps these onto process exit codes: validation and schema problems
exit 2, I/O failures exit 3, numerical failures exit 4.
"""

from __future__ import annotations


class BountyDynError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(BountyDynError, ValueError):
    """Invalid parameters, preconditions, or input data."""


class SchemaError(ValidationError):
    """Input file does not match its declared schema."""


class NumericalError(BountyDynError, ArithmeticError):
    """A computation is numerically impossible (singular, degenerate, ...)."""
