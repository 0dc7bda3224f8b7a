"""Exception hierarchy shared across the package.

Exit codes used by the CLI: 2 for usage/parameter problems, 3 for data
problems (bad files, capacity limits, state mismatches), 4 for numeric
failures.
"""


class AogError(Exception):
    exit_code = 1


class ParameterError(AogError, ValueError):
    """Invalid construction parameters or flag values."""

    exit_code = 2


class LookupError_(AogError, KeyError):
    """Unknown node id or missing table entry."""

    exit_code = 3


class CapacityError(AogError):
    """An enumeration would exceed the caller-supplied limit."""

    exit_code = 3

    def __init__(self, count, limit):
        super().__init__(f"parse-tree count {count} exceeds limit {limit}")
        self.count = count
        self.limit = limit


class DataError(AogError):
    """Bad input data (files, datasets, shape mismatches)."""

    exit_code = 3


class FormatError(DataError):
    """A file failed to parse; message carries location when known."""


class VersionError(DataError):
    """Schema version of a file does not match this package."""


class StateError(DataError):
    """Operation applied to state produced in an incompatible mode."""


class NumericError(AogError):
    """Non-finite values encountered where finite ones are required."""

    exit_code = 4
