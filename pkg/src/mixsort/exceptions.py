class MixSortError(Exception):
    """Base class for errors raised by this package."""


class ContractViolation(MixSortError, ValueError):
    """An operation was called with inputs outside its contract."""


class KalmanError(MixSortError, ArithmeticError):
    """Innovation covariance could not be factorized. Recoverable per track."""


class DatasetFormatError(MixSortError, ValueError):
    """A MOTChallenge-style file could not be parsed."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}" if line else f"{self.path}: {message}")


class ConfigError(MixSortError, ValueError):
    """A run configuration failed validation."""
