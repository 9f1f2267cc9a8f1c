from __future__ import annotations

import json
from pathlib import Path

import pytest

from conceptquiz.generation import Question
from conceptquiz.ingest import sectionize_plaintext
from conceptquiz.llm import LLMClient

FIXTURES = Path(__file__).parent / "fixtures"


class SequenceBackend:
    """Scripted replies consumed in call order; for sequential single-op tests."""

    def __init__(self, replies, usages=None):
        self.replies = list(replies)
        self.usages = list(usages) if usages is not None else None
        self.requests = []

    def complete_once(self, req):
        self.requests.append(req)
        assert self.replies, "scripted backend ran out of replies"
        usage = self.usages.pop(0) if self.usages else None
        return self.replies.pop(0), usage


def seq_client(*replies, usages=None, **kwargs):
    """LLMClient over a SequenceBackend; returns (client, backend)."""
    backend = SequenceBackend(replies, usages)
    return LLMClient(backend, sleep=lambda _s: None, **kwargs), backend


def make_question(
    stem="Which signal is the primary indicator of consumer health?",
    choices=("Queue depth.", "Consumer lag.", "Publish rate.", "Payload size."),
    correct=1,
    qid="q0001",
    method="direct",
):
    return Question(
        id=qid, stem=stem, choices=tuple(choices), correct_index=correct, method=method
    )


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def sample_doc():
    text = (FIXTURES / "sample_doc.md").read_text(encoding="utf-8")
    return sectionize_plaintext(text, title="Field Notes on Message Queues")


@pytest.fixture
def baseline_questions():
    data = json.loads((FIXTURES / "repeated_baseline.json").read_text(encoding="utf-8"))
    questions = []
    for i, item in enumerate(data["questions"]):
        questions.append(
            Question(
                id=f"bq{i:02d}",
                stem=item["stem"],
                choices=tuple(item["choices"]),
                correct_index="ABCD".index(item["correct"]),
                method="direct",
            )
        )
    return questions
