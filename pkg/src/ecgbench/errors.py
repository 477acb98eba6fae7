"""Exception hierarchy shared by every ecgbench module.

All domain errors derive from :class:`EcgBenchError`, which the CLI maps to
exit status 1. They also derive from :class:`ValueError` so callers that only
care about "bad input" can catch the builtin.
"""


class EcgBenchError(ValueError):
    """Base class for domain errors."""


class ParseError(EcgBenchError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class StructureError(EcgBenchError):
    pass


class LengthError(EcgBenchError):
    pass


class DataError(EcgBenchError):
    pass


class RangeError(EcgBenchError):
    pass


class LabelError(EcgBenchError):
    pass


class SplitError(EcgBenchError):
    pass


class BandError(EcgBenchError):
    pass


class InsufficientPeaks(EcgBenchError):
    pass


class InsufficientData(EcgBenchError):
    pass


class SpecError(EcgBenchError):
    pass


class EmptyMatrixError(EcgBenchError):
    pass


class GroupingError(EcgBenchError):
    pass


class ShapeError(EcgBenchError):
    pass


class FormatError(EcgBenchError):
    pass


class ConfigError(EcgBenchError):
    pass


class SchemaError(EcgBenchError):
    pass
