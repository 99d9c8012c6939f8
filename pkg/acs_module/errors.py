"""Exceptions raised by the decoding library and the experiment harness."""


class DecodingError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(DecodingError, ValueError):
    """Input data violates a documented invariant (bad mass, NaN, zero vector...)."""


class ArgumentError(DecodingError, ValueError):
    """A parameter is outside its allowed range."""


class ContractViolation(DecodingError):
    """A collaborator (backend, caller) broke the interface contract."""


class BackendStepError(DecodingError):
    """
    Wraps a failure raised while querying the backend during generation.

    Args:
        step (int): Generation step (0-based) at which the backend failed.
        cause (Exception): Original exception.
    """

    def __init__(self, step, cause):
        super().__init__(f"backend failed at step {step}: {cause}")
        self.step = step
        self.cause = cause


class CorpusFormatError(DecodingError):
    """A line of a corpus / trace / report file could not be parsed."""

    def __init__(self, path, line_number, message):
        super().__init__(f"{path}:{line_number}: {message}")
        self.path = path
        self.line_number = line_number


class ReportMismatchError(DecodingError):
    """Two reports do not cover the same corpus ids."""


class ConfigError(DecodingError):
    """Invalid manifest, config file or command-line setting."""
