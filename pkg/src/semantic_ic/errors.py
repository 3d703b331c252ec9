"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Array shapes or lengths do not agree."""


class ConfigurationError(ValueError):
    """A configuration value is outside its allowed domain."""


class NumericError(ArithmeticError):
    """A non-finite value appeared where finite values are required."""


class FormatError(ValueError):
    """A binary file does not follow its expected layout.

    ``offset`` is the byte position at which parsing failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset
