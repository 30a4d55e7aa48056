"""Exception types shared across the pipeline."""


class ApkganError(Exception):
    pass


class ConfigError(ApkganError, ValueError):
    pass


# corpus
class MalformedArchive(ApkganError):
    pass


class NoMatchingEntry(ApkganError):
    pass


class EmptyStream(ApkganError, ValueError):
    pass


class FormatViolation(ApkganError):
    pass


class IoFailure(ApkganError, OSError):
    pass


class InsufficientSamples(ApkganError):
    pass


# tensor
class ShapeMismatch(ApkganError, ValueError):
    pass


class NumericalFault(ApkganError, ArithmeticError):
    pass


class NotScalar(ApkganError, ValueError):
    pass


class Disconnected(ApkganError):
    pass


# gan
class DataExhausted(ApkganError):
    pass


class GateNeverPassed(ApkganError):
    """Raised only when the caller asks for strict gating."""


# fid
class TooFewSamples(ApkganError, ValueError):
    pass


class NotSymmetric(ApkganError, ValueError):
    pass


class IndefiniteMatrix(ApkganError, ValueError):
    pass


class DimensionMismatch(ApkganError, ValueError):
    pass


class ScheduleTooSmall(ApkganError, ValueError):
    pass


class SizeMismatch(ApkganError, ValueError):
    pass


# classifier / harness
class EmptyPool(ApkganError):
    pass


class LengthMismatch(ApkganError, ValueError):
    pass


class UnmatchedCells(ApkganError):
    pass
