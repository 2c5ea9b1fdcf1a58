"""Exception hierarchy shared across the package."""


class LplError(Exception):
    """Base class for all errors raised by lpl."""


class ConfigError(LplError, ValueError):
    """Invalid configuration (dimension chains, option ranges)."""


class ShapeError(LplError, ValueError):
    """Array shapes do not match what an operation expects."""


class NumericError(LplError, ArithmeticError):
    """A non-finite value appeared where a finite one is required."""

    def __init__(self, message, *, layer=None, step=None):
        super().__init__(message)
        self.layer = layer
        self.step = step


class ContractError(LplError, RuntimeError):
    """A calling contract was violated (e.g. a stale forward trace)."""


class InsufficientDataError(LplError, ValueError):
    """Too few samples for the requested statistic."""


class DivergenceError(LplError, ValueError):
    """A divergence is infinite or undefined for the given arguments."""


class FormatError(LplError, ValueError):
    """Malformed binary input. ``offset`` is the byte position of the problem."""

    def __init__(self, message, *, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class VersionError(FormatError):
    """Wrong magic bytes or unsupported format version."""


class CorruptFileError(FormatError):
    """Length fields or payload are inconsistent with the file size."""
