class KeyhuntError(Exception):
    exit_code = 4


class ConfigError(KeyhuntError, ValueError):
    """Bad flags, unsupported ciphers, unusable models or recipes."""
    exit_code = 2


class DataError(KeyhuntError, ValueError):
    """Inputs on disk or in memory that do not hold what they claim to."""
    exit_code = 4


class UnknownCipher(ConfigError):
    pass


class UnsupportedCipher(ConfigError):
    pass


class InvalidRecipe(ConfigError):
    pass


class OverlappingRegions(InvalidRecipe):
    pass


class UntrainedModel(ConfigError):
    pass


class ModelNotFound(ConfigError):
    pass


class ProbeLengthError(ConfigError):
    pass


class AddressOutOfRange(DataError):
    pass


class MalformedLog(DataError):
    pass


class AnnotationMismatch(DataError):
    pass


class MissingHeap(DataError):
    pass


class EmptySelection(DataError):
    pass


class MatrixTooSmall(DataError):
    pass


class HeapSmallerThanWindow(DataError):
    pass


class SingleClassData(DataError):
    pass


class TooFewMinority(DataError):
    pass


class CorruptModel(DataError):
    pass


class InvalidPacket(DataError):
    pass


class NoNewkeysFound(DataError):
    pass


class UnsupportedLinkType(DataError):
    pass


class TruncatedCapture(DataError):
    pass


class FileTooShort(DataError):
    pass
