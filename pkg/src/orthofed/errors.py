"""Exception types shared across the package."""


class DimensionMismatchError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class NonFiniteMatrixError(ValueError):
    """A matrix contains NaN or infinite entries."""


class SingularMatrixError(ArithmeticError):
    """A linear solve hit a pivot that is zero to working precision."""


class DegenerateFeatureError(ValueError):
    """A feature vector has (or acquires) a norm too small to normalize."""


class FileFormatError(ValueError):
    """Base class for embedding/classifier file parsing failures."""


class BadMagicError(FileFormatError):
    pass


class UnsupportedVersionError(FileFormatError):
    pass


class TruncatedFileError(FileFormatError):
    pass


class LabelOutOfRangeError(FileFormatError):
    pass


class ProtocolError(RuntimeError):
    """Malformed or unexpected frame on the federation wire protocol."""


class ConfigError(ValueError):
    """Invalid experiment configuration (maps to CLI exit code 2)."""
