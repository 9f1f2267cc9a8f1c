"""Exception hierarchy shared across the package."""

from __future__ import annotations


class ConceptQuizError(Exception):
    """Base class for all package errors."""


# --- ingest ---

class ServiceUnreachable(ConceptQuizError):
    """The structure-extraction service could not be reached."""


class UnparseableDocument(ConceptQuizError):
    """The service returned no usable body text for the document."""


class EmptyDocument(ConceptQuizError):
    """Input text is empty or all whitespace."""


class InvalidChunkConfig(ConceptQuizError):
    """Passage chunking was configured with overlap >= target."""


# --- llm ---

class AuthError(ConceptQuizError):
    """The provider rejected the configured credentials."""


class RateLimited(ConceptQuizError):
    """Transient provider failures persisted past the retry budget."""


class MalformedResponse(ConceptQuizError):
    """The provider reply did not match the chat-completions schema."""


class UnknownTemplate(ConceptQuizError):
    """No prompt template registered under the requested name."""


class MissingVariable(ConceptQuizError):
    """A required template variable was not bound at render time."""


class MockScriptError(ConceptQuizError):
    """The scripted mock backend has no rule matching a request."""


# --- concepts / generation ---

class ParseFailure(ConceptQuizError):
    """An LLM reply could not be parsed into the expected structure."""


class InsufficientQuestions(ConceptQuizError):
    """A generation run could not reach the requested question count."""


class RefineViolation(ConceptQuizError):
    """A choice-refinement reply altered the correct answer text."""


# --- retrieval ---

class EmbedderFailure(ConceptQuizError):
    """The embedding backend failed while building an index."""


class DimensionMismatch(ConceptQuizError):
    """Query and passage embeddings have incompatible shapes."""


class ZeroVector(ConceptQuizError):
    """Cosine similarity is undefined for a zero-norm vector."""


# --- judge ---

class ScoreParseFailure(ConceptQuizError):
    """No integer score could be extracted from a judge reply."""


class OutOfRange(ConceptQuizError):
    """The judge reply contained an integer outside 1..4."""


# --- cost ---

class NoCrossover(ConceptQuizError):
    """Model parameters make direct prompting cheaper at every N."""


# --- pipeline ---

class StageError(ConceptQuizError):
    """A pipeline stage failed; carries the stage tag for reporting."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
