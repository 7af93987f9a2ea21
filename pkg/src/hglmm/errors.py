"""Exception hierarchy shared by all modules.

The CLI maps these onto distinct exit codes (see cli.py): file format
problems exit 2, shape mismatches exit 3, numerical failures exit 4.
"""


class HglmmError(Exception):
    """Base class for all toolkit errors."""


class FvmFormatError(HglmmError):
    """A file does not conform to the expected on-disk layout."""


class DataValidationError(HglmmError):
    """Input content violates an invariant (non-finite values, bad ids, ...)."""


class ShapeMismatchError(HglmmError):
    """Two inputs disagree on dimensions."""


class NumericalError(HglmmError):
    """A numerical procedure cannot produce a valid result (rank deficiency, ...)."""
