"""Exception hierarchy. Each class carries the CLI exit status it maps to."""


class RtmError(Exception):
    exit_code = 1


class ValidationError(RtmError, ValueError):
    exit_code = 3


class MissingFileError(RtmError, FileNotFoundError):
    exit_code = 4


class DimensionError(RtmError, ValueError):
    exit_code = 5


class FormatError(RtmError, ValueError):
    """Malformed file structure (ragged rows, bad sparse indices)."""

    exit_code = 6


class ParseError(FormatError):
    """A cell could not be read as a number."""


class NumericError(RtmError, ArithmeticError):
    exit_code = 7


class ProtocolError(RtmError):
    exit_code = 8


class CapacityError(RtmError):
    exit_code = 9
