"""Deterministic scripted backend for hermetic pipeline runs.

Replies are keyed on request content (stage tag plus prompt substring or
fingerprint), never on call order, so runs are byte-identical no matter how
calls interleave under concurrency. Scripts live in JSON fixture files:

    {
      "rules": [
        {"tag": "rank", "text": "[2, 1, 3]"},
        {"tag": "map", "contains": "message brokers", "text": "- ..."},
        {"fingerprint": "0a1b...", "text": "...",
         "usage": {"prompt_tokens": 100, "completion_tokens": 50}}
      ],
      "default": {"text": "fallback reply"}
    }

Rules are tried in order; the first whose conditions all hold wins. A rule
with explicit ``usage`` pins the token numbers the ledger will record,
otherwise the client falls back to its token estimate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import MockScriptError
from .llm import ChatRequest, TokenUsage


@dataclass(frozen=True)
class MockRule:
    text: str
    tag: str | None = None
    contains: str | None = None
    fingerprint: str | None = None
    usage: TokenUsage | None = None

    def matches(self, req: ChatRequest, prompt: str) -> bool:
        if self.tag is not None and self.tag != req.tag:
            return False
        if self.fingerprint is not None and self.fingerprint != req.fingerprint():
            return False
        if self.contains is not None and self.contains not in prompt:
            return False
        return True


def _parse_usage(raw: dict | None) -> TokenUsage | None:
    if raw is None:
        return None
    return TokenUsage(
        prompt_tokens=int(raw.get("prompt_tokens", 0)),
        completion_tokens=int(raw.get("completion_tokens", 0)),
        cached_prompt_tokens=int(raw.get("cached_prompt_tokens", 0)),
    )


class MockBackend:
    """Content-keyed scripted backend implementing the llm Backend protocol."""

    def __init__(self, rules: list[MockRule], default: MockRule | None = None) -> None:
        self.rules = list(rules)
        self.default = default

    @classmethod
    def from_file(cls, path: str | Path) -> "MockBackend":
        spec = json.loads(Path(path).read_text(encoding="utf-8"))
        rules = [
            MockRule(
                text=r["text"],
                tag=r.get("tag"),
                contains=r.get("contains"),
                fingerprint=r.get("fingerprint"),
                usage=_parse_usage(r.get("usage")),
            )
            for r in spec.get("rules", [])
        ]
        default = None
        if "default" in spec:
            d = spec["default"]
            default = MockRule(text=d["text"], usage=_parse_usage(d.get("usage")))
        return cls(rules, default)

    def complete_once(self, req: ChatRequest) -> tuple[str, TokenUsage | None]:
        prompt = req.prompt_text()
        for rule in self.rules:
            if rule.matches(req, prompt):
                return rule.text, rule.usage
        if self.default is not None:
            return self.default.text, self.default.usage
        raise MockScriptError(
            f"no scripted reply for tag={req.tag!r} fingerprint={req.fingerprint()} "
            f"prompt head: {prompt[:120]!r}"
        )
