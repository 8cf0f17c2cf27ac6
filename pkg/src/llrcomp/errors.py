"""Exception types raised across the package."""


class LlrCompError(Exception):
    """Base class for all package errors."""


class ConfigurationError(LlrCompError, ValueError):
    """Unsupported or inconsistent configuration."""


class DegenerateChannelError(LlrCompError, ValueError):
    """The channel coefficient is zero, so the observation carries no information."""


class AlistParseError(LlrCompError, ValueError):
    """Malformed alist content."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CodeConstructionError(LlrCompError):
    """The parity-check matrix cannot be brought to systematic form."""


class TrainingError(LlrCompError, RuntimeError):
    """Training diverged."""

    def __init__(self, message, epoch=None):
        self.epoch = epoch
        super().__init__(message)


class ParamsFormatError(LlrCompError, ValueError):
    """A weight file is truncated, corrupt or does not match the expected shape."""


class FitError(LlrCompError, ValueError):
    """A quantizer could not be fitted on the given samples."""
