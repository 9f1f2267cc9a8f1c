"""End-to-end orchestration: document in, validated quiz out.

The orchestrator owns all parallelism (sections and ideas run under one
concurrency cap); stage modules expose pure or immutable interfaces so no
cross-stage locking exists. Any stage failure aborts the run with the stage
tag attached rather than emitting a partial quiz.
"""

from __future__ import annotations

import datetime as dt
import logging
import os
import random
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass

from . import concepts, generation, retrieval
from .concepts import DEFAULT_CONTEXT_WINDOW_TOKENS, DEFAULT_MODEL, MainIdea
from .errors import ConceptQuizError, InsufficientQuestions, StageError
from .ingest import DEFAULT_CHUNK_TOKENS, DEFAULT_OVERLAP_TOKENS, Document, chunk_passages
from .llm import LLMClient
from .generation import Question, Quiz, QuizRequest

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    method: str = generation.METHOD_SAVAAL
    n: int = 20
    k: int = 3
    batch_b: int = 20
    seed: int = 0
    refine: bool = False
    model: str = DEFAULT_MODEL
    rank_model: str | None = None
    context_window_tokens: int = DEFAULT_CONTEXT_WINDOW_TOKENS
    concurrency_cap: int = 8
    embedder_mode: str = retrieval.COSINE
    chunk_target_tokens: int = DEFAULT_CHUNK_TOKENS
    chunk_overlap_tokens: int = DEFAULT_OVERLAP_TOKENS

    def quiz_request(self) -> QuizRequest:
        return QuizRequest(
            n=self.n,
            method=self.method,
            k=self.k,
            batch_b=self.batch_b,
            seed=self.seed,
            refine=self.refine,
        )


def default_created_at() -> str:
    """UTC timestamp for quiz files; honors SOURCE_DATE_EPOCH for
    reproducible runs."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        moment = dt.datetime.fromtimestamp(int(epoch), tz=dt.timezone.utc)
    else:
        moment = dt.datetime.now(tz=dt.timezone.utc)
    return moment.strftime("%Y-%m-%dT%H:%M:%SZ")


@contextmanager
def _stage(tag: str):
    try:
        yield
    except StageError:
        raise
    except (ConceptQuizError, ValueError) as exc:
        raise StageError(tag, exc) from exc


def _run_savaal(
    doc: Document, cfg: RunConfig, client: LLMClient, embedder: retrieval.Embedder
) -> list[Question]:
    with _stage("map"):
        notes = concepts.map_extract_many(client, list(doc.sections), model=cfg.model)
    with _stage("combine"):
        combined = concepts.combine(
            client, notes, model=cfg.model, context_window_tokens=cfg.context_window_tokens
        )
    with _stage("reduce"):
        ideas = concepts.reduce_ideas(
            client,
            combined,
            context_window_tokens=cfg.context_window_tokens,
            model=cfg.model,
            source_doc=doc.id,
        )
    with _stage("rank"):
        ideas = concepts.rank_ideas(client, ideas, model=cfg.rank_model or cfg.model)

    with _stage("index"):
        passages = chunk_passages(doc, cfg.chunk_target_tokens, cfg.chunk_overlap_tokens)
        index = retrieval.build_index(passages, embedder, mode=cfg.embedder_mode)

    allocation = [
        (idea, count)
        for idea, count in generation.allocate_questions(cfg.n, ideas)
        if count > 0
    ]
    retrieval_cfg = retrieval.RetrievalConfig(k=cfg.k, mode=cfg.embedder_mode)

    def generate_one(item: tuple[MainIdea, int]) -> list[Question]:
        idea, count = item
        relevant = retrieval.retrieve_top_k(index, idea, retrieval_cfg)
        questions = generation.generate_for_idea(client, idea, relevant, count, model=cfg.model)
        if cfg.refine:
            questions = [
                generation.refine_choices(
                    client, q, idea, relevant, model=cfg.model, enabled=True
                )
                for q in questions
            ]
        return questions

    with _stage("generate"):
        with ThreadPoolExecutor(max_workers=cfg.concurrency_cap) as pool:
            batches = list(pool.map(generate_one, allocation))
    return [q for batch in batches for q in batch]


def run(
    doc: Document,
    cfg: RunConfig,
    client: LLMClient,
    embedder: retrieval.Embedder | None = None,
    created_at: str | None = None,
) -> Quiz:
    """Run one generation method over a document and assemble the quiz."""
    req = cfg.quiz_request()

    if cfg.method == generation.METHOD_SAVAAL:
        if embedder is None:
            embedder = retrieval.HashEmbedder()
        questions = _run_savaal(doc, cfg, client, embedder)
    elif cfg.method == generation.METHOD_DIRECT:
        with _stage("generate"):
            questions = generation.generate_direct(client, doc, req, model=cfg.model)
    elif cfg.method == generation.METHOD_SUMMARY:
        with _stage("generate"):
            questions = generation.generate_from_summary(client, doc, req, model=cfg.model)
    elif cfg.method == generation.METHOD_SINGLE_PROMPT:
        with _stage("generate"):
            questions = generation.generate_single_prompt(client, doc, req, model=cfg.model)
    else:
        raise StageError("config", ValueError(f"unsupported method {cfg.method!r}"))

    with _stage("assemble"):
        questions = generation.dedupe_questions(questions)
        if len(questions) < cfg.n:
            raise InsufficientQuestions(
                f"{len(questions)} unique questions after deduplication, need {cfg.n}"
            )
        questions = generation.finalize_questions(questions[: cfg.n], doc.id, cfg.method)
        rng = random.Random(cfg.seed)
        questions = [generation.shuffle_choices(q, rng) for q in questions]
        for q in questions:
            q.validate()

    return Quiz(
        doc_id=doc.id,
        title=doc.title,
        method=cfg.method,
        model=cfg.model,
        seed=cfg.seed,
        questions=questions,
        usage_totals=client.ledger.totals(),
        created_at=created_at or default_created_at(),
    )
