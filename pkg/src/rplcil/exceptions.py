"""Exception hierarchy shared by every rplcil module."""


class RplCilError(Exception):
    """Base class for all errors raised by rplcil."""


class ConfigError(RplCilError, ValueError):
    pass


class TopologyError(RplCilError):
    pass


class SplitError(RplCilError, ValueError):
    pass


class SchemaError(RplCilError, ValueError):
    pass


class DataError(RplCilError, ValueError):
    pass


class DivergenceError(RplCilError, ArithmeticError):
    pass


class ShapeError(RplCilError, ValueError):
    pass


class EmptyBufferError(RplCilError, LookupError):
    pass


class ModelFileError(RplCilError, ValueError):
    """Raised when a persisted model file is malformed or has the wrong magic."""
