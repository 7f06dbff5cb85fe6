"""Exception taxonomy shared across the package.

Most errors subclass ValueError so generic callers can treat bad input
uniformly while tests and the CLI can still distinguish failure kinds.
"""


class PromptOptError(Exception):
    """Base class for all package-specific errors."""


class DatasetParseError(PromptOptError, ValueError):
    """A dataset line is not valid JSON."""

    def __init__(self, path: str, line_no: int, detail: str):
        self.path = path
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {detail}")


class SchemaError(PromptOptError, ValueError):
    """A record is missing or violates a required field."""

    def __init__(self, field: str, detail: str = "", line_no: int | None = None):
        self.field = field
        self.line_no = line_no
        loc = f" (line {line_no})" if line_no is not None else ""
        super().__init__(f"invalid field '{field}'{loc}: {detail}" if detail else f"missing or invalid field '{field}'{loc}")


class EmptyDatasetError(PromptOptError, ValueError):
    """The dataset file contains no records."""


class SizeError(PromptOptError, ValueError):
    """A requested size exceeds what is available."""

    def __init__(self, requested: int, available: int, what: str = "examples"):
        self.requested = requested
        self.available = available
        super().__init__(f"requested {requested} {what} but only {available} available")


class ArgumentError(PromptOptError, ValueError):
    """An argument violates a documented precondition."""


class ShapeError(PromptOptError, ValueError):
    """Tensor or vector dimensions are inconsistent."""


class NumericError(PromptOptError, ArithmeticError):
    """A non-finite value appeared where finite math is required."""


class MissingEmbeddingError(PromptOptError, KeyError):
    """The file-backed embedding provider has no vector for a text."""


class TransportError(PromptOptError, IOError):
    """An HTTP call failed after exhausting retries."""

    def __init__(self, detail: str, status: int | None = None, attempts: int = 0):
        self.status = status
        self.attempts = attempts
        super().__init__(detail)


class RequestError(PromptOptError, ValueError):
    """An HTTP call was rejected with a non-retryable client error."""

    def __init__(self, detail: str, status: int | None = None):
        self.status = status
        super().__init__(detail)


class ProtocolError(PromptOptError, ValueError):
    """A rendered prompt does not match the active template structure."""


class TemplateError(PromptOptError, ValueError):
    """A prompt template is malformed (missing placeholder or section)."""


class IntegrityError(PromptOptError, ValueError):
    """A checkpoint file is truncated, corrupt, or of the wrong version."""


class ConfigError(PromptOptError, ValueError):
    """A run configuration is invalid as a whole."""
