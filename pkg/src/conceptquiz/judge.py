"""AI-judge scoring of questions on 1-4 rubrics, aggregation, bias audit."""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field

from .concepts import DEFAULT_MODEL
from .errors import OutOfRange, ScoreParseFailure
from .generation import CHOICE_LETTERS, Question
from .llm import LLMClient, extend_conversation, user_request
from .templates import render

logger = logging.getLogger(__name__)

METRICS = (
    "understanding",
    "choices",
    "clarity",
    "usability",
    "difficulty",
    "cognitive_level",
    "engagement",
)

_TEMPLATE_FOR_METRIC = {m: f"judge_{m}" for m in METRICS}
_TEMPLATE_FOR_METRIC["cognitive_level"] = "judge_cognitive"

SCORE_LABELS = {
    4: "Agree",
    3: "Somewhat Agree",
    2: "Somewhat Disagree",
    1: "Disagree",
}
LABELS = tuple(SCORE_LABELS[s] for s in (4, 3, 2, 1))
NEGATIVE_LABELS = ("Somewhat Disagree", "Disagree")


@dataclass(frozen=True)
class JudgeScore:
    question_id: str
    metric: str
    score: int
    label: str = field(init=False)

    def __post_init__(self) -> None:
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.score not in SCORE_LABELS:
            raise ValueError(f"score must be in 1..4, got {self.score}")
        object.__setattr__(self, "label", SCORE_LABELS[self.score])


_INT_RE = re.compile(r"(?<![\d-])(-?\d+)(?!\d)")

_REASK_NUDGE = "Please output only a score between 1 and 4."


def _extract_score(reply: str) -> int | None:
    """Lenient integer extraction: the first standalone number in the reply."""
    m = _INT_RE.search(reply)
    return int(m.group(1)) if m else None


def judge_question(
    client: LLMClient, q: Question, metric: str, model: str = DEFAULT_MODEL
) -> JudgeScore:
    """Score one question on one rubric; re-asks once on a malformed reply."""
    template = _TEMPLATE_FOR_METRIC.get(metric)
    if template is None:
        raise ValueError(f"no rubric registered for metric {metric!r}")

    prompt = render(
        template,
        {
            "question": q.stem,
            "options": "\n".join(f"{L}. {c}" for L, c in zip(CHOICE_LETTERS, q.choices)),
            "answer": f"{CHOICE_LETTERS[q.correct_index]}. {q.correct_text}",
        },
    )
    req = user_request(model, prompt, tag="judge")
    reply = client.complete(req).text
    value = _extract_score(reply)
    if value is None or value not in SCORE_LABELS:
        logger.debug("malformed judge reply %r; re-asking", reply[:60])
        req = extend_conversation(req, reply, _REASK_NUDGE)
        reply = client.complete(req).text
        value = _extract_score(reply)

    if value is None:
        raise ScoreParseFailure(f"no score in judge reply: {reply[:80]!r}")
    if value not in SCORE_LABELS:
        raise OutOfRange(f"judge returned {value}, outside 1..4")
    return JudgeScore(question_id=q.id, metric=metric, score=value)


@dataclass(frozen=True)
class MetricDistribution:
    counts: dict[str, int]
    fractions: dict[str, float]
    negative_fraction: float


def aggregate(scores: list[JudgeScore]) -> dict[str, MetricDistribution]:
    """Per-metric label counts, fractions, and negative-sentiment fraction."""
    result: dict[str, MetricDistribution] = {}
    for metric in METRICS:
        relevant = [s for s in scores if s.metric == metric]
        if not relevant:
            continue
        counts = {label: 0 for label in LABELS}
        for s in relevant:
            counts[s.label] += 1
        total = len(relevant)
        fractions = {label: counts[label] / total for label in LABELS}
        negative = sum(fractions[label] for label in NEGATIVE_LABELS)
        result[metric] = MetricDistribution(counts=counts, fractions=fractions, negative_fraction=negative)
    return result


def _chi2_sf_df3(x: float) -> float:
    """Survival function of the chi-square distribution with 3 degrees of
    freedom: erfc(sqrt(x/2)) + sqrt(2x/pi) * exp(-x/2)."""
    if x <= 0:
        return 1.0
    return math.erfc(math.sqrt(x / 2)) + math.sqrt(2 * x / math.pi) * math.exp(-x / 2)


@dataclass(frozen=True)
class PositionAudit:
    counts: dict[str, int]
    fractions: dict[str, float]
    chi_square: float
    p_value: float


def positional_bias_audit(qs: list[Question]) -> PositionAudit:
    """Where do correct answers sit? Fractions per position plus a chi-square
    statistic against the uniform 1/4 distribution."""
    counts = {letter: 0 for letter in CHOICE_LETTERS}
    for q in qs:
        counts[CHOICE_LETTERS[q.correct_index]] += 1
    total = len(qs)
    if total == 0:
        fractions = {letter: 0.0 for letter in CHOICE_LETTERS}
        return PositionAudit(counts=counts, fractions=fractions, chi_square=0.0, p_value=1.0)
    fractions = {letter: counts[letter] / total for letter in CHOICE_LETTERS}
    expected = total / 4
    chi_square = sum((counts[letter] - expected) ** 2 / expected for letter in CHOICE_LETTERS)
    return PositionAudit(
        counts=counts,
        fractions=fractions,
        chi_square=chi_square,
        p_value=_chi2_sf_df3(chi_square),
    )
