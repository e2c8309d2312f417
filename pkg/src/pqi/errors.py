"""Exception hierarchy shared by the library and the CLI.

The CLI maps these onto process exit codes: usage problems exit 1,
data problems exit 2, numerical failures exit 3.
"""

from __future__ import annotations


class PqiError(Exception):
    """Base class for all errors raised by this package."""


class DataError(PqiError):
    """Bad or missing input data: unreadable files, schema violations."""


class DecodeError(DataError):
    """An image file could not be decoded to 8-bit RGB."""


class NumericalError(PqiError):
    """A computation produced non-finite values or diverged."""
