"""Exception types raised across the package."""


class RankTEError(Exception):
    """Base class for package errors."""


class EmbeddingRangeError(RankTEError, IndexError):
    """A delay vector or future block would reach outside the series."""


class InvalidValueError(RankTEError, ValueError):
    """Input values are non-finite or not of the required form."""


class EmptyInputError(RankTEError, ValueError):
    pass


class InvalidSpecError(RankTEError, ValueError):
    """Parameters violate a precondition (k too large, m < 1, ...)."""


class ModelUnavailableError(RankTEError):
    """A parametric null model cannot be formed from the given estimates."""


class InvalidShiftError(RankTEError, ValueError):
    pass


class GenerationError(RankTEError, RuntimeError):
    """A simulator failed (diverging orbit, integrator step-size underflow)."""


class ConfigError(RankTEError, ValueError):
    pass
