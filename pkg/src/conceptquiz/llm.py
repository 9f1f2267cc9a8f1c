"""Provider-agnostic chat-completion boundary.

One client fronts every pipeline stage: it renders nothing itself, but owns
retries, the token-usage ledger, and the concurrency cap. Stage tags on
requests flow into ledger entries so call counts and per-stage token totals
are assertable after a run:

    map / combine / reduce / rank   concept-extraction stages
    generate                        question-generation calls (all methods)
    summary                         generation turns of the summary method
    judge                           rubric scoring calls

The wire protocol is the OpenAI-compatible chat-completions JSON API; the
scripted mock in :mod:`conceptquiz.mockllm` implements the same backend
interface for hermetic runs.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Protocol, Sequence

import requests

from .errors import AuthError, MalformedResponse, RateLimited
from .ingest import estimate_tokens

logger = logging.getLogger(__name__)

DEFAULT_BASE_URL = "https://api.openai.com/v1"
DEFAULT_CONCURRENCY_CAP = 8


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int
    completion_tokens: int
    cached_prompt_tokens: int = 0
    stage_tag: str = ""

    def __post_init__(self) -> None:
        if min(self.prompt_tokens, self.completion_tokens, self.cached_prompt_tokens) < 0:
            raise ValueError("token counts must be non-negative")
        if self.cached_prompt_tokens > self.prompt_tokens:
            raise ValueError("cached_prompt_tokens cannot exceed prompt_tokens")


@dataclass(frozen=True)
class Completion:
    text: str
    usage: TokenUsage


@dataclass(frozen=True)
class ChatRequest:
    model: str
    turns: tuple[tuple[str, str], ...]
    system: str = ""
    temperature: float = 0.0
    tag: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "turns", tuple((r, t) for r, t in self.turns))
        if not self.turns:
            raise ValueError("a chat request needs at least one turn")

    def prompt_text(self) -> str:
        """All outbound text, used for fingerprints and token estimates."""
        parts = [self.system] if self.system else []
        parts.extend(text for _, text in self.turns)
        return "\n".join(parts)

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(self.tag.encode("utf-8"))
        h.update(b"\x00")
        h.update(self.prompt_text().encode("utf-8"))
        return h.hexdigest()[:16]


def user_request(model: str, text: str, tag: str, system: str = "") -> ChatRequest:
    return ChatRequest(model=model, turns=(("user", text),), system=system, tag=tag)


def extend_conversation(req: ChatRequest, assistant_text: str, user_text: str) -> ChatRequest:
    """Append an assistant reply and the next user turn to a conversation."""
    turns = req.turns + (("assistant", assistant_text), ("user", user_text))
    return replace(req, turns=turns)


class UsageLedger:
    """Append-only, thread-safe record of per-call token usage."""

    def __init__(self) -> None:
        self._entries: list[TokenUsage] = []
        self._lock = threading.Lock()

    def add(self, usage: TokenUsage) -> None:
        with self._lock:
            self._entries.append(usage)

    def entries(self, tag: str | None = None) -> tuple[TokenUsage, ...]:
        with self._lock:
            snapshot = tuple(self._entries)
        if tag is None:
            return snapshot
        return tuple(e for e in snapshot if e.stage_tag == tag)

    def count(self, tag: str | None = None) -> int:
        return len(self.entries(tag))

    def totals(self, tag: str | None = None) -> TokenUsage:
        entries = self.entries(tag)
        return TokenUsage(
            prompt_tokens=sum(e.prompt_tokens for e in entries),
            completion_tokens=sum(e.completion_tokens for e in entries),
            cached_prompt_tokens=sum(e.cached_prompt_tokens for e in entries),
            stage_tag=tag or "total",
        )

    def totals_by_tag(self) -> dict[str, TokenUsage]:
        tags = {e.stage_tag for e in self.entries()}
        return {t: self.totals(t) for t in sorted(tags)}


class TransientBackendError(Exception):
    """Retryable transport or provider failure (network, 429, 5xx)."""


class Backend(Protocol):
    def complete_once(self, req: ChatRequest) -> tuple[str, TokenUsage | None]:
        """Return (text, provider usage or None). May raise TransientBackendError."""
        ...


class OpenAIBackend:
    """Chat-completions client for any OpenAI-compatible endpoint."""

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        timeout: float = 120.0,
        session: requests.Session | None = None,
    ) -> None:
        self.base_url = (base_url or os.environ.get("LLM_BASE_URL") or DEFAULT_BASE_URL).rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get("LLM_API_KEY")
        self.timeout = timeout
        self.session = session or requests.Session()

    def complete_once(self, req: ChatRequest) -> tuple[str, TokenUsage | None]:
        if not self.api_key:
            raise AuthError("no API key configured (set LLM_API_KEY)")
        messages = []
        if req.system:
            messages.append({"role": "system", "content": req.system})
        messages.extend({"role": role, "content": text} for role, text in req.turns)
        try:
            resp = self.session.post(
                f"{self.base_url}/chat/completions",
                json={"model": req.model, "messages": messages, "temperature": req.temperature},
                headers={"Authorization": f"Bearer {self.api_key}"},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransientBackendError(str(exc)) from exc

        if resp.status_code in (401, 403):
            raise AuthError(f"provider rejected credentials (HTTP {resp.status_code})")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientBackendError(f"HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise MalformedResponse(f"HTTP {resp.status_code}: {resp.text[:200]}")

        try:
            payload = resp.json()
            text = payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"unexpected response shape: {exc}") from exc
        if text is None:
            raise MalformedResponse("response carried no message content")

        usage = None
        raw = payload.get("usage")
        if isinstance(raw, dict) and "prompt_tokens" in raw:
            cached = 0
            details = raw.get("prompt_tokens_details")
            if isinstance(details, dict):
                cached = int(details.get("cached_tokens") or 0)
            usage = TokenUsage(
                prompt_tokens=int(raw.get("prompt_tokens") or 0),
                completion_tokens=int(raw.get("completion_tokens") or 0),
                cached_prompt_tokens=cached,
            )
        return text, usage


class LLMClient:
    """Retrying chat client that journals every call into a ledger."""

    def __init__(
        self,
        backend: Backend,
        ledger: UsageLedger | None = None,
        max_attempts: int = 3,
        backoff_base: float = 0.5,
        concurrency_cap: int = DEFAULT_CONCURRENCY_CAP,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.backend = backend
        self.ledger = ledger if ledger is not None else UsageLedger()
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.concurrency_cap = concurrency_cap
        self._sleep = sleep

    def complete(self, req: ChatRequest) -> Completion:
        last_exc: Exception | None = None
        for attempt in range(self.max_attempts):
            try:
                text, usage = self.backend.complete_once(req)
            except TransientBackendError as exc:
                last_exc = exc
                if attempt + 1 < self.max_attempts:
                    delay = self.backoff_base * (2**attempt)
                    logger.warning(
                        "transient failure on %s call (attempt %d/%d): %s; retrying in %.1fs",
                        req.tag or "untagged", attempt + 1, self.max_attempts, exc, delay,
                    )
                    self._sleep(delay)
                continue
            if usage is None:
                usage = TokenUsage(
                    prompt_tokens=estimate_tokens(req.prompt_text()),
                    completion_tokens=estimate_tokens(text),
                )
            usage = replace(usage, stage_tag=req.tag)
            self.ledger.add(usage)
            return Completion(text=text, usage=usage)
        raise RateLimited(
            f"gave up after {self.max_attempts} attempts: {last_exc}"
        ) from last_exc

    def complete_many(self, reqs: Sequence[ChatRequest]) -> list[Completion]:
        """Run requests concurrently under the cap, preserving input order."""
        if len(reqs) <= 1:
            return [self.complete(r) for r in reqs]
        with ThreadPoolExecutor(max_workers=self.concurrency_cap) as pool:
            return list(pool.map(self.complete, reqs))
