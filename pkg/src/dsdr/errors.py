"""Exception hierarchy shared by every dsdr module."""


class DsdrError(Exception):
    """Base class for all errors raised by dsdr."""


class DegenerateRange(DsdrError, ValueError):
    pass


class InvalidSliceCount(DsdrError, ValueError):
    pass


class OutOfRange(DsdrError, ValueError):
    pass


class NotStandardized(DsdrError, ValueError):
    pass


class NonSymmetric(DsdrError, ValueError):
    pass


class ConvergenceFailure(DsdrError, RuntimeError):
    pass


class SingularCovariance(DsdrError, ValueError):
    pass


class RankDeficient(DsdrError, ValueError):
    pass


class InsufficientDimension(DsdrError, ValueError):
    pass


class InsufficientRepetitions(DsdrError, ValueError):
    pass


class EmptyShard(DsdrError, ValueError):
    pass


class DimensionMismatch(DsdrError, ValueError):
    pass


class DuplicateWorker(DsdrError, ValueError):
    pass


class ProtocolViolation(DsdrError, RuntimeError):
    pass


class TransportFailure(DsdrError, RuntimeError):
    """Connection or framing error; ``offset`` is the byte offset of the bad frame."""

    def __init__(self, message, offset=None):
        super().__init__(message if offset is None else f"{message} (frame offset {offset})")
        self.offset = offset


class BudgetExceeded(DsdrError, RuntimeError):
    pass


class ConfigError(DsdrError, ValueError):
    pass


class ParseError(DsdrError, ValueError):
    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        suffix = f" at {', '.join(where)}" if where else ""
        super().__init__(message + suffix)
        self.row = row
        self.column = column


class MissingColumn(ParseError):
    pass


class NonNumericCell(ParseError):
    pass
