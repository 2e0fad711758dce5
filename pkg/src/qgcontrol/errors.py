"""Exception hierarchy shared across the package."""


class QgcError(Exception):
    """Base class for all package-specific errors."""


class CorpusError(QgcError):
    """Raised on unreadable or malformed corpus data."""


class PromptError(QgcError):
    """Raised when prompt encoding preconditions are violated."""


class MalformedOutputError(QgcError):
    """Raised when a generated string cannot be parsed back into fields."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class BackendError(QgcError):
    """Raised on generation-backend transport or contract failures."""


class EvaluationError(QgcError):
    """Raised on evaluation protocol violations (unmatched ids, exclusion overflow)."""


class ReportError(QgcError):
    """Raised on report rendering misuse (mixed protocols, unknown format)."""


class PipelineError(QgcError):
    """Raised when a pipeline stage fails or its configuration does not validate."""

    def __init__(self, message: str, stage: str = "", exit_code: int = 1):
        super().__init__(message)
        self.stage = stage
        self.exit_code = exit_code
