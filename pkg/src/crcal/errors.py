"""Exception types shared across the package.

Two failure families are distinguished so the CLI can map them to exit
codes: malformed inputs (``ValidationError``, exit 2) and numerically
invalid evaluation regions such as zero censoring mass (``NumericError``,
exit 3).
"""


class CrcalError(Exception):
    """Base class for all package errors."""


class ValidationError(CrcalError):
    """Invalid input data, file format, or parameter combination."""


class NumericError(CrcalError):
    """Evaluation requested outside the numerically valid domain."""
