"""Exception hierarchy shared by the library and the CLI."""

from typing import Any


class LabError(ValueError):
    """Base class for every domain failure raised by jrrelp."""

    exit_code = 2
    kind = "validation"

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context = context

    def to_dict(self) -> dict:
        """Machine-readable form printed by the CLI on stderr."""
        return {"error": type(self).__name__, "kind": self.kind, "message": self.message, **self.context}


class LoadError(LabError):
    """A dataset file could not be parsed into sentences."""


class CorpusValidationError(LabError):
    """A sentence violates a structural invariant (spans, lengths)."""


class StructuralError(LabError):
    """A dependency parse is not a tree."""


class ConfigurationError(LabError):
    """Model or trainer configuration is inconsistent."""


class InputError(LabError):
    """A batch lacks something a model needs."""


class GenerationError(LabError):
    """A synthetic corpus specification cannot be satisfied."""


class KnowledgeGraphError(LabError):
    """Answer-set construction produced no usable triples."""


class EncodingError(LabError):
    """A label or token cannot be encoded under the vocabulary."""


class EmbeddingLookupError(LabError, IndexError):
    """An index falls outside an embedding matrix."""


class DivergenceError(LabError):
    """A loss term became non-finite during training."""

    exit_code = 3
    kind = "divergence"


class ArtifactError(LabError):
    """An artifact is missing, unreadable, or fails its hash check."""

    exit_code = 4
    kind = "io"


class UnexpectedError(LabError):
    """A failure from outside the hierarchy, reported in the same JSON shape."""

    kind = "internal"


def as_lab_error(exc: Exception) -> LabError:
    """Wrap a stray exception; operating-system failures count as IO."""
    if isinstance(exc, LabError):
        return exc
    if isinstance(exc, OSError):
        return ArtifactError(str(exc), cause=type(exc).__name__, path=exc.filename)
    return UnexpectedError(str(exc) or type(exc).__name__, cause=type(exc).__name__)
