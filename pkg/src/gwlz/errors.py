"""Exception hierarchy shared by all gwlz modules."""


class GwlzError(Exception):
    """Base class for all errors raised by gwlz."""


class ConfigError(GwlzError, ValueError):
    pass


class DataError(GwlzError, ValueError):
    """Input data violates a numeric precondition (NaN/Inf, zero range...)."""


class FormatError(GwlzError, ValueError):
    """A file or byte stream does not match its layout."""


class CorruptionError(FormatError):
    """CRC mismatch."""


class UnsupportedVersionError(FormatError):
    pass


class DimensionError(DataError):
    pass
