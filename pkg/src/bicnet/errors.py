"""Exception types shared across the package."""


class BicNetError(Exception):
    pass


class DimensionError(BicNetError, ValueError):
    pass


class ScalarKindError(BicNetError, TypeError):
    """Arithmetic mixed 32-bit and 64-bit tensors."""


class NonFiniteError(BicNetError, FloatingPointError):
    pass


class UsageError(BicNetError, ValueError):
    pass


class ConfigurationError(BicNetError, ValueError):
    pass


class CapacityError(BicNetError, IndexError):
    pass


class InternalError(BicNetError, RuntimeError):
    pass


class IngestError(BicNetError, OSError):
    pass


class FormatError(BicNetError, ValueError):
    pass
