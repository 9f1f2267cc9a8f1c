"""Question generation: the concept-grounded method plus three baselines.

All methods converge on the same contract: N validated multiple-choice
questions with four distinct choices each, deduplicated by stem and
shuffle-randomized so the correct answer lands in each position uniformly.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import re
from dataclasses import dataclass, replace
from pathlib import Path

from .concepts import DEFAULT_MODEL, MainIdea
from .errors import InsufficientQuestions, ParseFailure, RefineViolation
from .ingest import Document, Passage
from .llm import LLMClient, TokenUsage, extend_conversation, user_request
from .templates import instruction_text, render

logger = logging.getLogger(__name__)

METHOD_SAVAAL = "savaal"
METHOD_DIRECT = "direct"
METHOD_SUMMARY = "summary"
METHOD_SINGLE_PROMPT = "single_prompt"
METHODS = (METHOD_SAVAAL, METHOD_DIRECT, METHOD_SUMMARY, METHOD_SINGLE_PROMPT)

CHOICE_LETTERS = ("A", "B", "C", "D")
PARSE_REATTEMPTS = 2
DEDUP_SHINGLE_SIZE = 3
DEDUP_JACCARD_THRESHOLD = 0.9


@dataclass(frozen=True)
class Question:
    id: str
    stem: str
    choices: tuple[str, str, str, str]
    correct_index: int
    idea_title: str | None = None
    passage_ids: tuple[str, ...] = ()
    method: str = ""

    @property
    def correct_text(self) -> str:
        return self.choices[self.correct_index]

    def validate(self) -> None:
        if len(self.choices) != 4:
            raise ValueError("a question needs exactly 4 choices")
        if not 0 <= self.correct_index <= 3:
            raise ValueError("correct_index out of range")
        if not self.stem.strip() or any(not c.strip() for c in self.choices):
            raise ValueError("stem and choices must be non-empty")
        if len(set(self.choices)) != 4:
            raise ValueError("choices must be pairwise distinct")


@dataclass(frozen=True)
class QuizRequest:
    n: int
    method: str = METHOD_SAVAAL
    k: int = 3
    batch_b: int = 20
    seed: int = 0
    refine: bool = False

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.batch_b < 1:
            raise ValueError("batch_b must be >= 1")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class Quiz:
    doc_id: str
    title: str
    method: str
    model: str
    seed: int
    questions: list[Question]
    usage_totals: TokenUsage
    created_at: str


# --- MCQ block parsing ---

_CHOICE_RE = re.compile(r"^\s*(?:[-*•]\s*)?(?:\*\*)?([A-Z])[.)]\s*(.+?)\s*$")
_ANSWER_RE = re.compile(r"correct\s+answer\s*:?\s*\**\s*([A-Z])\b", re.IGNORECASE)
_NUMBERED_RE = re.compile(r"^\s*(?:\*\*)?(?:\d+[.)]|Question\s+\d+[:.])\s*(.+?)\s*$", re.IGNORECASE)


def _clean_stem(lines: list[str]) -> str:
    """Pick the question stem out of the free text preceding the choices."""
    kept = [ln.strip() for ln in lines]
    # Prefer the text from the last numbered line onward; models commonly
    # number their questions and may put prose before the first one.
    start = None
    for i, ln in enumerate(kept):
        if _NUMBERED_RE.match(ln):
            start = i
    if start is not None:
        m = _NUMBERED_RE.match(kept[start])
        kept = [m.group(1)] + kept[start + 1 :]
    else:
        # Otherwise take the last non-blank paragraph.
        para: list[str] = []
        for ln in kept:
            if not ln:
                para = []
            else:
                para.append(ln)
        kept = para
    stem = " ".join(ln for ln in kept if ln).strip()
    return stem.replace("**", "").strip()


def parse_mcq(text: str) -> list[Question]:
    """Extract (stem, four labeled choices, answer letter) blocks.

    Raises ParseFailure when a block has the wrong choice count, an answer
    letter outside A-D, or no answer line, or when no block exists at all.
    """
    questions: list[Question] = []
    stem_lines: list[str] = []
    choices: list[tuple[str, str]] = []

    def finalize(answer_letter: str) -> None:
        letters = [letter for letter, _ in choices]
        if letters != list(CHOICE_LETTERS):
            raise ParseFailure(
                f"expected choices labeled A-D, got {letters or 'none'}"
            )
        if answer_letter not in CHOICE_LETTERS:
            raise ParseFailure(f"unknown answer letter {answer_letter!r}")
        stem = _clean_stem(stem_lines)
        if not stem:
            raise ParseFailure("question block has no stem")
        q = Question(
            id="",
            stem=stem,
            choices=tuple(text for _, text in choices),  # type: ignore[arg-type]
            correct_index=CHOICE_LETTERS.index(answer_letter),
        )
        try:
            q.validate()
        except ValueError as exc:
            raise ParseFailure(str(exc)) from exc
        questions.append(q)

    for line in text.splitlines():
        answer = _ANSWER_RE.search(line)
        if answer:
            finalize(answer.group(1).upper())
            stem_lines, choices = [], []
            continue
        choice = _CHOICE_RE.match(line)
        if choice:
            choices.append((choice.group(1), choice.group(2).replace("**", "").strip()))
        elif choices and line.strip():
            # Wrapped continuation of the previous choice.
            letter, prev = choices[-1]
            choices[-1] = (letter, f"{prev} {line.strip()}")
        else:
            stem_lines.append(line)

    if choices:
        raise ParseFailure("question block is missing its answer line")
    if not questions:
        raise ParseFailure("no MCQ block found in reply")
    return questions


# --- shuffling and deduplication ---

def shuffle_choices(q: Question, rng: random.Random) -> Question:
    """Uniformly permute the four choices, keeping the correct text correct."""
    perm = [0, 1, 2, 3]
    rng.shuffle(perm)
    new_choices = tuple(q.choices[j] for j in perm)
    return replace(q, choices=new_choices, correct_index=perm.index(q.correct_index))


_NON_ALNUM_RE = re.compile(r"[^0-9a-z]+")


def _normalize_stem(stem: str) -> str:
    return _NON_ALNUM_RE.sub(" ", stem.casefold()).strip()


def _shingles(normalized: str) -> frozenset[tuple[str, ...]]:
    words = normalized.split()
    if len(words) < DEDUP_SHINGLE_SIZE:
        return frozenset([tuple(words)])
    return frozenset(
        tuple(words[i : i + DEDUP_SHINGLE_SIZE])
        for i in range(len(words) - DEDUP_SHINGLE_SIZE + 1)
    )


def _jaccard(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def dedupe_questions(qs: list[Question]) -> list[Question]:
    """Drop later questions whose stems duplicate earlier ones.

    A stem is a duplicate when it matches an earlier stem after whitespace/
    case normalization, or when the word-shingle Jaccard similarity of the
    two stems reaches the threshold.
    """
    kept: list[Question] = []
    seen: list[tuple[str, frozenset]] = []
    for q in qs:
        norm = _normalize_stem(q.stem)
        sh = _shingles(norm)
        dup = any(
            norm == other_norm or _jaccard(sh, other_sh) >= DEDUP_JACCARD_THRESHOLD
            for other_norm, other_sh in seen
        )
        if dup:
            logger.debug("dropping duplicate question: %.60s", q.stem)
            continue
        kept.append(q)
        seen.append((norm, sh))
    return kept


# --- provenance ---

def question_id(doc_id: str, method: str, stem: str) -> str:
    key = f"{doc_id}|{method}|{_normalize_stem(stem)}"
    return hashlib.sha256(key.encode("utf-8")).hexdigest()[:12]


def finalize_questions(qs: list[Question], doc_id: str, method: str) -> list[Question]:
    return [replace(q, id=question_id(doc_id, method, q.stem), method=method) for q in qs]


# --- allocation ---

def allocate_questions(n: int, ideas: list[MainIdea]) -> list[tuple[MainIdea, int]]:
    """Spread n questions over ranked ideas.

    With n below the idea count, only the top-n ideas get one question each;
    otherwise every idea gets floor(n/M) and the remainder goes one apiece
    to the best-ranked ideas.
    """
    ordered = sorted(ideas, key=lambda i: i.rank)
    m = len(ordered)
    if n < m:
        return [(idea, 1 if i < n else 0) for i, idea in enumerate(ordered)]
    base, remainder = divmod(n, m)
    return [(idea, base + (1 if i < remainder else 0)) for i, idea in enumerate(ordered)]


# --- generation methods ---

def _format_passages(passages: list[Passage]) -> str:
    return "\n\n".join(p.text for p in passages)


def generate_for_idea(
    client: LLMClient,
    idea: MainIdea,
    passages: list[Passage],
    n: int,
    model: str = DEFAULT_MODEL,
) -> list[Question]:
    """Generate n questions grounded in one idea and its retrieved passages."""
    if n < 1:
        raise ValueError("n must be >= 1")
    prompt = render(
        "savaal_generate",
        {
            "num_questions": n,
            "main_idea": f"{idea.title}: {idea.description}",
            "passages": _format_passages(passages),
        },
    )
    last_error = "reply parsed but was short"
    for _ in range(1 + PARSE_REATTEMPTS):
        completion = client.complete(user_request(model, prompt, tag="generate"))
        try:
            parsed = parse_mcq(completion.text)
        except ParseFailure as exc:
            last_error = str(exc)
            continue
        if len(parsed) >= n:
            return [
                replace(
                    q,
                    idea_title=idea.title,
                    passage_ids=tuple(p.id for p in passages),
                    method=METHOD_SAVAAL,
                )
                for q in parsed[:n]
            ]
        last_error = f"got {len(parsed)} of {n} questions"
    raise ParseFailure(
        f"idea {idea.title!r}: {last_error} after {PARSE_REATTEMPTS} re-attempts"
    )


def generate_direct(
    client: LLMClient,
    doc: Document,
    req: QuizRequest,
    model: str = DEFAULT_MODEL,
    context: str | None = None,
) -> list[Question]:
    """Multi-turn whole-context baseline: batches of ``batch_b`` questions.

    The context rides in the first turn only; later turns extend the same
    conversation, so each batch resends it as conversation history (the
    prefix a caching provider would discount).
    """
    context_text = doc.text if context is None else context
    method = req.method if req.method == METHOD_SUMMARY else METHOD_DIRECT
    tag = "summary" if method == METHOD_SUMMARY else "generate"
    max_turns = -(-req.n // req.batch_b) + 2
    collected: list[Question] = []

    first = render(
        "direct_generate",
        {"num_questions": min(req.n, req.batch_b), "context": context_text},
    )
    conversation = user_request(model, first, tag=tag)

    for _ in range(max_turns):
        completion = client.complete(conversation)
        try:
            batch = parse_mcq(completion.text)
        except ParseFailure as exc:
            logger.warning("unparseable batch (%s); asking for more", exc)
            batch = []
        collected = dedupe_questions(collected + batch)
        if len(collected) >= req.n:
            return [replace(q, method=method) for q in collected[: req.n]]
        need = min(req.batch_b, req.n - len(collected))
        follow_up = render("direct_additional", {"num_questions": need, "context": ""})
        conversation = extend_conversation(conversation, completion.text, follow_up)

    raise InsufficientQuestions(
        f"collected {len(collected)} unique questions of {req.n} within {max_turns} turns"
    )


def summarize_map_reduce(client: LLMClient, doc: Document, model: str = DEFAULT_MODEL) -> str:
    """Per-section notes (map) condensed into a single document summary (reduce)."""
    reqs = []
    for section in doc.sections:
        ctx = f"{section.heading}\n\n{section.text}" if section.heading else section.text
        reqs.append(user_request(model, render("map", {"context": ctx}), tag="map"))
    notes = [c.text for c in client.complete_many(reqs)]
    combined = "\n\n".join(notes)
    reply = client.complete(
        user_request(model, render("reduce", {"context": combined}), tag="reduce")
    )
    return reply.text


def generate_from_summary(
    client: LLMClient, doc: Document, req: QuizRequest, model: str = DEFAULT_MODEL
) -> list[Question]:
    """Direct-style generation with a map-reduce summary standing in for the document."""
    summary = summarize_map_reduce(client, doc, model=model)
    if req.method != METHOD_SUMMARY:
        req = replace(req, method=METHOD_SUMMARY)
    return generate_direct(client, doc, req, model=model, context=summary)


_SINGLE_PROMPT_PREAMBLE = (
    "You will build a quiz from the context at the end of this message. "
    "Work through the following stages in order, and think step by step "
    "through each stage before writing the final questions."
)


def single_prompt_text(doc: Document, n: int) -> str:
    """One mega-prompt chaining every stage's instructions over the full document."""
    stages = [
        ("Stage 1 - extract concepts from each part of the context", instruction_text("map")),
        ("Stage 2 - merge the concept lists", instruction_text("combine")),
        ("Stage 3 - condense to the most important concepts", instruction_text("reduce")),
        ("Stage 4 - rank the concepts", instruction_text("rank")),
        (
            "Stage 5 - write the questions",
            instruction_text("savaal_generate").replace("{num_questions}", str(n)),
        ),
    ]
    parts = [_SINGLE_PROMPT_PREAMBLE]
    parts.extend(f"{title}:\n\n{body}" for title, body in stages)
    parts.append(
        f"After working through the stages, output only the final {n} "
        "multiple-choice questions in the format described in Stage 5."
    )
    parts.append(f"Context:\n{doc.text}")
    return "\n\n".join(parts)


def generate_single_prompt(
    client: LLMClient, doc: Document, req: QuizRequest, model: str = DEFAULT_MODEL
) -> list[Question]:
    """Single-call baseline: all stage instructions concatenated into one prompt."""
    prompt = single_prompt_text(doc, req.n)
    completion = client.complete(user_request(model, prompt, tag="generate"))
    return [replace(q, method=METHOD_SINGLE_PROMPT) for q in parse_mcq(completion.text)]


def refine_choices(
    client: LLMClient,
    q: Question,
    idea: MainIdea,
    passages: list[Passage],
    model: str = DEFAULT_MODEL,
    enabled: bool = False,
) -> Question:
    """Optionally rewrite the three distractors, never touching the correct text.

    Disabled by default; when off this is the identity and makes no LLM
    call. A reply that alters the correct answer text (or cannot be parsed)
    is discarded and the original question kept.
    """
    if not enabled:
        return q

    letter = CHOICE_LETTERS[q.correct_index]
    prompt = render(
        "refine",
        {
            "main_idea": f"{idea.title}: {idea.description}",
            "passages": _format_passages(passages),
            "question": q.stem,
            "options": "\n".join(f"{L}. {c}" for L, c in zip(CHOICE_LETTERS, q.choices)),
            "correct_answer": f"{letter}. {q.correct_text}",
        },
    )
    completion = client.complete(user_request(model, prompt, tag="generate"))
    try:
        refined = parse_mcq(completion.text)[0]
        if refined.correct_text != q.correct_text:
            raise RefineViolation(
                f"refine reply changed the correct answer of {q.id or q.stem[:40]!r}"
            )
    except (ParseFailure, RefineViolation) as exc:
        logger.warning("%s; keeping original question", exc)
        return q
    return replace(q, choices=refined.choices, correct_index=refined.correct_index)


# --- quiz file I/O ---

QUIZ_SCHEMA_VERSION = "1"


def quiz_to_dict(quiz: Quiz) -> dict:
    questions = []
    for q in quiz.questions:
        entry: dict = {
            "id": q.id,
            "stem": q.stem,
            "choices": list(q.choices),
            "correct_index": q.correct_index,
        }
        if q.idea_title is not None:
            entry["idea_title"] = q.idea_title
        entry["passage_ids"] = list(q.passage_ids)
        questions.append(entry)
    return {
        "version": QUIZ_SCHEMA_VERSION,
        "doc_id": quiz.doc_id,
        "title": quiz.title,
        "method": quiz.method,
        "model": quiz.model,
        "seed": quiz.seed,
        "created_at": quiz.created_at,
        "questions": questions,
        "usage": {
            "prompt_tokens": quiz.usage_totals.prompt_tokens,
            "completion_tokens": quiz.usage_totals.completion_tokens,
            "cached_prompt_tokens": quiz.usage_totals.cached_prompt_tokens,
        },
    }


def write_quiz(quiz: Quiz, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(quiz_to_dict(quiz), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def quiz_from_dict(data: dict) -> Quiz:
    try:
        if data["version"] != QUIZ_SCHEMA_VERSION:
            raise ValueError(f"unsupported quiz schema version {data['version']!r}")
        questions = []
        for raw in data["questions"]:
            q = Question(
                id=raw["id"],
                stem=raw["stem"],
                choices=tuple(raw["choices"]),
                correct_index=raw["correct_index"],
                idea_title=raw.get("idea_title"),
                passage_ids=tuple(raw.get("passage_ids", ())),
                method=data["method"],
            )
            q.validate()
            questions.append(q)
        usage = data["usage"]
        return Quiz(
            doc_id=data["doc_id"],
            title=data["title"],
            method=data["method"],
            model=data["model"],
            seed=data["seed"],
            questions=questions,
            usage_totals=TokenUsage(
                prompt_tokens=usage["prompt_tokens"],
                completion_tokens=usage["completion_tokens"],
                cached_prompt_tokens=usage.get("cached_prompt_tokens", 0),
            ),
            created_at=data["created_at"],
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise ValueError(f"quiz file does not match the expected schema: {exc}") from exc


def load_quiz(path: str | Path) -> Quiz:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"quiz file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError("quiz file does not hold a JSON object")
    return quiz_from_dict(data)
