"""Exception hierarchy.

Three families map onto the CLI exit codes: configuration problems (1),
data problems (2) and numerical failures (3).
"""


class RandEnsError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(RandEnsError, ValueError):
    pass


class DataError(RandEnsError):
    pass


class NumericalError(RandEnsError, ArithmeticError):
    pass


# configuration / parameter domain
class InvalidParameter(ConfigError):
    pass


class InvalidAngle(InvalidParameter):
    pass


class EmptyGrid(ConfigError):
    pass


# pattern construction
class ZeroDispersion(DataError):
    pass


class MisalignedCycles(DataError):
    pass


class EmptyTrainingSet(DataError):
    pass


class EmptyPool(DataError):
    pass


class InsufficientData(DataError):
    pass


class EmptySubsample(DataError):
    pass


class DimensionMismatch(RandEnsError, ValueError):
    pass


# ingestion
class ParseError(DataError):
    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class GapError(DataError):
    def __init__(self, missing):
        self.missing = list(missing)
        shown = ", ".join(str(t) for t in self.missing[:5])
        more = "" if len(self.missing) <= 5 else f" (+{len(self.missing) - 5} more)"
        super().__init__(f"missing timestamps: {shown}{more}")


class DuplicateTimestamp(DataError):
    pass


class MissingHistory(DataError):
    pass


# evaluation
class ZeroActual(DataError):
    pass


class ShapeMismatch(RandEnsError, ValueError):
    pass


class WindowMismatch(DataError):
    pass


class NonFinite(NumericalError):
    pass
