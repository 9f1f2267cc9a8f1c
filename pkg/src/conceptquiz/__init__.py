"""Concept-driven multiple-choice quiz generation for long documents."""

__version__ = "0.1.0"

from .concepts import MainIdea
from .generation import Question, Quiz, QuizRequest
from .ingest import Document, Passage, Section
from .llm import ChatRequest, Completion, LLMClient, TokenUsage, UsageLedger
from .pipeline import RunConfig, run

__all__ = [
    "ChatRequest",
    "Completion",
    "Document",
    "LLMClient",
    "MainIdea",
    "Passage",
    "Question",
    "Quiz",
    "QuizRequest",
    "RunConfig",
    "Section",
    "TokenUsage",
    "UsageLedger",
    "run",
    "__version__",
]
