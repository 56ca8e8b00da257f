"""Exception hierarchy shared across the toolkit.

Two families matter operationally: ValidationError (malformed inputs,
bad arguments, broken file layouts) maps to CLI exit code 1, and
DegenerateDataError (inputs that are structurally fine but make a
quantity undefined, e.g. a single-class region) maps to exit code 2.
"""


class FireUQError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(FireUQError):
    """Input violates a contract: bad range, bad argument, bad layout."""


class ShapeError(ValidationError):
    """Array dimensionality or shape does not match what was expected."""


class ParseError(ValidationError):
    """A file could not be decoded (malformed header, truncated data)."""


class DegenerateDataError(FireUQError):
    """Data is well-formed but the requested quantity is undefined on it."""


class DegenerateClassError(DegenerateDataError):
    """A ranking metric was asked for on a region with only one class."""


class EmptyMaskError(DegenerateDataError):
    """An operation requiring foreground (or a boundary) got an empty mask."""
