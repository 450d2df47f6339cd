"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition or invariant."""


class FormatError(ValueError):
    """Raised when a binary file does not conform to the GTED format."""


class ConfigError(ValueError):
    """Raised when an experiment config fails to parse or validate.

    Carries the offending line number and field name when known so the CLI
    can emit a precise diagnostic.
    """

    def __init__(self, message, line=None, field=None):
        super().__init__(message)
        self.line = line
        self.field = field
