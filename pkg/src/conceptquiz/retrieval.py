"""Passage indexing and top-k retrieval per main idea.

Two scoring modes share one interface: cosine over whole-passage vectors
(works with any embeddings API) and token-level late interaction, where a
query-passage score is the sum over query tokens of each token's maximum
dot product with any passage token.
"""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
import requests

from .concepts import MainIdea
from .errors import DimensionMismatch, EmbedderFailure, ZeroVector
from .ingest import Passage

logger = logging.getLogger(__name__)

COSINE = "cosine"
LATE_INTERACTION = "late_interaction"


class Embedder(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray:
        """Whole-text embedding, shape (dimension,)."""
        ...

    def embed_tokens(self, text: str) -> np.ndarray:
        """Per-token embeddings, shape (n_tokens, dimension)."""
        ...


class HashEmbedder:
    """Seeded hash-projection embedder so retrieval tests run hermetically.

    Every word maps to a unit vector derived from its SHA-256 digest, making
    embeddings deterministic across runs and platforms.
    """

    def __init__(self, dimension: int = 16, seed: int = 0) -> None:
        self.dimension = dimension
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def _word_vector(self, word: str) -> np.ndarray:
        vec = self._cache.get(word)
        if vec is not None:
            return vec
        raw = bytearray()
        counter = 0
        while len(raw) < 4 * self.dimension:
            h = hashlib.sha256(f"{self.seed}:{counter}:{word}".encode("utf-8")).digest()
            raw.extend(h)
            counter += 1
        ints = np.frombuffer(bytes(raw[: 4 * self.dimension]), dtype="<u4").astype(np.float64)
        vec = ints / 2**31 - 1.0
        vec /= np.linalg.norm(vec)
        vec.flags.writeable = False
        self._cache[word] = vec
        return vec

    def embed_tokens(self, text: str) -> np.ndarray:
        words = text.split() or [""]
        return np.stack([self._word_vector(w.casefold()) for w in words])

    def embed(self, text: str) -> np.ndarray:
        vec = self.embed_tokens(text).sum(axis=0)
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            # Opposing word vectors cancelled out; fall back to a stable stand-in.
            return self._word_vector("\x00cancelled")
        return vec / norm


class HTTPEmbedder:
    """Client for an OpenAI-compatible embeddings endpoint (whole-text only)."""

    def __init__(
        self,
        model: str,
        base_url: str | None = None,
        api_key: str | None = None,
        timeout: float = 60.0,
    ) -> None:
        self.model = model
        self.base_url = (base_url or os.environ.get("LLM_BASE_URL") or "https://api.openai.com/v1").rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get("LLM_API_KEY")
        self.timeout = timeout
        self.dimension = 0  # learned from the first response

    def embed(self, text: str) -> np.ndarray:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            resp = requests.post(
                f"{self.base_url}/embeddings",
                json={"model": self.model, "input": [text]},
                headers=headers,
                timeout=self.timeout,
            )
            resp.raise_for_status()
            vec = np.asarray(resp.json()["data"][0]["embedding"], dtype=np.float64)
        except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
            raise EmbedderFailure(str(exc)) from exc
        if self.dimension == 0:
            self.dimension = vec.shape[0]
        return vec

    def embed_tokens(self, text: str) -> np.ndarray:
        raise EmbedderFailure(
            "the HTTP embeddings API returns whole-text vectors only; "
            "late-interaction mode needs a token-level embedder"
        )


@dataclass(frozen=True)
class RetrievalConfig:
    k: int = 3
    mode: str = COSINE

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.mode not in (COSINE, LATE_INTERACTION):
            raise ValueError(f"unknown retrieval mode {self.mode!r}")


@dataclass(frozen=True)
class PassageIndex:
    passages: tuple[Passage, ...]
    mode: str
    vectors: np.ndarray | tuple[np.ndarray, ...]
    embedder: Embedder = field(repr=False)


def build_index(
    passages: Sequence[Passage], embedder: Embedder, mode: str = COSINE
) -> PassageIndex:
    """Embed all passages; the result is immutable and shareable across threads."""
    if not passages:
        raise ValueError("cannot build an index over zero passages")
    if mode not in (COSINE, LATE_INTERACTION):
        raise ValueError(f"unknown retrieval mode {mode!r}")

    try:
        if mode == COSINE:
            rows = []
            for p in passages:
                vec = np.asarray(embedder.embed(p.text), dtype=np.float64)
                norm = np.linalg.norm(vec)
                if norm == 0.0:
                    raise ZeroVector(f"passage {p.id} embedded to a zero vector")
                rows.append(vec / norm)
            matrix = np.stack(rows)
            matrix.flags.writeable = False
            vectors: np.ndarray | tuple[np.ndarray, ...] = matrix
        else:
            mats = []
            for p in passages:
                mat = np.asarray(embedder.embed_tokens(p.text), dtype=np.float64)
                mat.flags.writeable = False
                mats.append(mat)
            vectors = tuple(mats)
    except (ZeroVector, EmbedderFailure):
        raise
    except Exception as exc:
        raise EmbedderFailure(f"embedding failed while building index: {exc}") from exc

    return PassageIndex(passages=tuple(passages), mode=mode, vectors=vectors, embedder=embedder)


def score_cosine(q: np.ndarray, p: np.ndarray) -> float:
    """Cosine similarity of two vectors, in [-1, 1]."""
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if q.shape != p.shape or q.ndim != 1:
        raise DimensionMismatch(f"vector shapes differ: {q.shape} vs {p.shape}")
    qn, pn = np.linalg.norm(q), np.linalg.norm(p)
    if qn == 0.0 or pn == 0.0:
        raise ZeroVector("cosine similarity is undefined for zero vectors")
    return float(np.clip(np.dot(q, p) / (qn * pn), -1.0, 1.0))


def score_late_interaction(query_token_vecs: np.ndarray, passage_token_vecs: np.ndarray) -> float:
    """MaxSim: sum over query tokens of the max dot product with any passage token."""
    q = np.asarray(query_token_vecs, dtype=np.float64)
    p = np.asarray(passage_token_vecs, dtype=np.float64)
    if q.ndim != 2 or p.ndim != 2 or q.shape[0] == 0 or p.shape[0] == 0:
        raise DimensionMismatch("both token matrices must be non-empty and 2-D")
    if q.shape[1] != p.shape[1]:
        raise DimensionMismatch(f"token dimensions differ: {q.shape[1]} vs {p.shape[1]}")
    return float(np.dot(q, p.T).max(axis=1).sum())


def retrieve_top_k(index: PassageIndex, idea: MainIdea, cfg: RetrievalConfig) -> list[Passage]:
    """Top-k passages for an idea, ties broken by ascending passage id."""
    if cfg.mode != index.mode:
        raise DimensionMismatch(
            f"index was built in {index.mode!r} mode, queried in {cfg.mode!r}"
        )
    query = f"{idea.title}: {idea.description}"
    if index.mode == COSINE:
        qv = np.asarray(index.embedder.embed(query), dtype=np.float64)
        scores = [score_cosine(qv, pv) for pv in index.vectors]
    else:
        qm = index.embedder.embed_tokens(query)
        scores = [score_late_interaction(qm, pm) for pm in index.vectors]

    order = sorted(range(len(index.passages)), key=lambda i: (-scores[i], index.passages[i].id))
    return [index.passages[i] for i in order[: cfg.k]]
