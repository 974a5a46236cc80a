"""Exception types raised across the package."""


class DomainError(ValueError):
    """Input outside the domain an operation is defined on."""


class NumericalError(ArithmeticError):
    """A computation produced a non-finite or unusable result."""


class FormatError(ValueError):
    """A file does not match the expected on-disk layout."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(DomainError):
    """A run configuration is missing keys, has unknown keys or bad values."""
