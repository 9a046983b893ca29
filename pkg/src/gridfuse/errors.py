"""Exception types shared across the package.

The CLI maps these onto exit codes: format and validation problems exit 2,
inconsistent hard evidence exits 3, anything else that escapes exits 4.
"""


class GridFuseError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(GridFuseError, ValueError):
    """An input file or config could not be parsed."""


class ValidationError(GridFuseError, ValueError):
    """Parsed input is structurally invalid (cycles, dangling ids, bad ranges)."""


class ZeroSupportError(GridFuseError):
    """The observed evidence is inconsistent with the deterministic factors.

    Raised when every value of some variable has probability zero given the
    rest, which can only happen if the hard (exactly 0/1) factor entries
    contradict the clamped evidence.
    """


class NetworkTooLargeError(GridFuseError):
    """Exact enumeration was requested for a network above the size limit."""
