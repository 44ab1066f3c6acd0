"""Exception hierarchy shared across the package."""


class GridMHError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(GridMHError, ValueError):
    pass


class InvalidStateError(GridMHError, ValueError):
    pass


class InvalidParameterError(GridMHError, ValueError):
    pass


class IntractableModelError(GridMHError):
    """Raised when an exact normalizing constant is requested but unavailable."""


class DivergenceError(GridMHError):
    pass


class DisconnectedGridError(GridMHError):
    pass


class NonFiniteEstimateError(GridMHError, ArithmeticError):
    pass


class UnsupportedDimensionError(GridMHError, ValueError):
    pass


class ChainError(GridMHError):
    """Wraps an estimator failure with the iteration at which it happened."""

    def __init__(self, iteration, cause):
        super().__init__(f"iteration {iteration}: {cause}")
        self.iteration = iteration
        self.cause = cause


class ConfigError(GridMHError, ValueError):
    pass


class PrecompFileError(GridMHError):
    """Base class for pre-computed data file problems."""


class PrecompVersionError(PrecompFileError):
    pass


class PrecompTruncatedError(PrecompFileError):
    pass


class PrecompChecksumError(PrecompFileError):
    pass


class PrecompCorruptError(PrecompFileError):
    pass
