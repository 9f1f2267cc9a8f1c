"""Main-idea extraction: per-section concept notes, merge, condense, rank.

The extraction runs as map (one call per section), combine (merge note
lists), an optional reduce pass when the combined notes exceed the model
context window, and a final importance ranking.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, replace

from .errors import ParseFailure
from .ingest import Section, estimate_tokens
from .llm import LLMClient, user_request
from .templates import get_template, render

logger = logging.getLogger(__name__)

DEFAULT_MODEL = "gpt-4o"
DEFAULT_CONTEXT_WINDOW_TOKENS = 128_000
MAX_REDUCE_ROUNDS = 3

_NOTE_SEPARATOR = "\n\n---\n\n"


@dataclass(frozen=True)
class MainIdea:
    title: str
    description: str
    rank: int
    source_doc: str = ""


def map_extract(client: LLMClient, section: Section, model: str = DEFAULT_MODEL) -> str:
    """Extract bullet-structured concept notes for one section."""
    if not section.text.strip():
        raise ValueError(f"section {section.index} has no text")
    context = f"{section.heading}\n\n{section.text}" if section.heading else section.text
    req = user_request(model, render("map", {"context": context}), tag="map")
    return client.complete(req).text


def map_extract_many(
    client: LLMClient, sections: list[Section], model: str = DEFAULT_MODEL
) -> list[str]:
    """Concurrent map stage: one call per section, results in section order."""
    for section in sections:
        if not section.text.strip():
            raise ValueError(f"section {section.index} has no text")
    reqs = []
    for section in sections:
        context = f"{section.heading}\n\n{section.text}" if section.heading else section.text
        reqs.append(user_request(model, render("map", {"context": context}), tag="map"))
    return [c.text for c in client.complete_many(reqs)]


def combine(
    client: LLMClient,
    notes: list[str],
    model: str = DEFAULT_MODEL,
    context_window_tokens: int = DEFAULT_CONTEXT_WINDOW_TOKENS,
) -> str:
    """Merge per-section notes into one consolidated list.

    Oversized inputs are combined in sequential groups that fit the window,
    then the group results are combined again.
    """
    if not notes:
        raise ValueError("combine requires at least one note")

    budget = max(1, context_window_tokens - estimate_tokens(get_template("combine").body))
    groups: list[list[str]] = [[]]
    used = 0
    for note in notes:
        cost = estimate_tokens(note)
        if groups[-1] and used + cost > budget:
            groups.append([])
            used = 0
        groups[-1].append(note)
        used += cost

    merged: list[str] = []
    for group in groups:
        context = _NOTE_SEPARATOR.join(group)
        req = user_request(model, render("combine", {"context": context}), tag="combine")
        merged.append(client.complete(req).text)

    if len(merged) == 1:
        return merged[0]
    return combine(client, merged, model=model, context_window_tokens=context_window_tokens)


# Accepted idea-list line shapes: "1. Title: description", "- Title: description",
# "Title: [description]". The first colon splits title from description.
_IDEA_LINE_RE = re.compile(
    r"^\s*(?:\d+[.)]\s*|[-*•]\s*)?(?:\*\*)?([^:\[\]]{1,200}?)(?:\*\*)?\s*:\s*\[?\s*(.+?)\s*\]?\s*$"
)


def parse_idea_list(text: str, source_doc: str = "") -> list[MainIdea]:
    """Parse a "Concept Name: summary" list into provisionally ranked ideas."""
    ideas: list[MainIdea] = []
    seen: set[str] = set()
    for line in text.splitlines():
        m = _IDEA_LINE_RE.match(line)
        if not m:
            continue
        title, description = m.group(1).strip(), m.group(2).strip()
        if not title or not description:
            continue
        key = title.casefold()
        if key in seen:
            continue
        seen.add(key)
        ideas.append(
            MainIdea(title=title, description=description, rank=len(ideas) + 1, source_doc=source_doc)
        )
    if not ideas:
        raise ParseFailure("no recognizable concept list in reply")
    return ideas


def reduce_ideas(
    client: LLMClient,
    combined: str,
    context_window_tokens: int = DEFAULT_CONTEXT_WINDOW_TOKENS,
    model: str = DEFAULT_MODEL,
    source_doc: str = "",
) -> list[MainIdea]:
    """Condense combined notes when they exceed the window, then parse ideas."""
    if not combined.strip():
        raise ValueError("combined notes are empty")
    current = combined
    rounds = 0
    while estimate_tokens(current) > context_window_tokens and rounds < MAX_REDUCE_ROUNDS:
        req = user_request(model, render("reduce", {"context": current}), tag="reduce")
        current = client.complete(req).text
        rounds += 1
    return parse_idea_list(current, source_doc=source_doc)


_RANK_ARRAY_RE = re.compile(r"\[([^\[\]]*)\]")


def _parse_rank_array(text: str, m: int) -> list[int] | None:
    for match in _RANK_ARRAY_RE.finditer(text):
        parts = [p.strip() for p in match.group(1).split(",") if p.strip()]
        try:
            values = [int(p) for p in parts]
        except ValueError:
            continue
        if len(values) == m and sorted(values) == list(range(1, m + 1)):
            return values
    return None


def rank_ideas(
    client: LLMClient, ideas: list[MainIdea], model: str = DEFAULT_MODEL
) -> list[MainIdea]:
    """Order ideas by LLM-assigned importance; fall back to given order.

    The reply must be a permutation of 1..M (value i at position j means
    idea j gets rank i). Anything else keeps the original order and logs a
    warning, so a malformed reply can never abort a run.
    """
    if not ideas:
        raise ValueError("rank_ideas requires at least one idea")
    if len(ideas) == 1:
        return [replace(ideas[0], rank=1)]

    listing = "\n".join(f"{i + 1}. {idea.title}: {idea.description}" for i, idea in enumerate(ideas))
    req = user_request(model, render("rank", {"main_ideas": listing}), tag="rank")
    reply = client.complete(req).text

    ranks = _parse_rank_array(reply, len(ideas))
    if ranks is None:
        logger.warning(
            "rank reply is not a permutation of 1..%d (%r); keeping original order",
            len(ideas),
            reply[:80],
        )
        return [replace(idea, rank=i + 1) for i, idea in enumerate(ideas)]

    ranked = [replace(idea, rank=ranks[i]) for i, idea in enumerate(ideas)]
    ranked.sort(key=lambda idea: idea.rank)
    return ranked
