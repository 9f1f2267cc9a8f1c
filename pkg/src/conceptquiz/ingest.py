"""Document ingestion: PDF structure extraction, plaintext sectioning, passage chunking.

Turns raw inputs into a sectioned :class:`Document` plus a chunked passage
corpus for retrieval. PDFs go through an external GROBID-compatible
structure-extraction service (TEI-XML over HTTP); plaintext and markdown are
sectioned locally so the rest of the pipeline can run offline.
"""

from __future__ import annotations

import hashlib
import logging
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import requests

from .errors import (
    EmptyDocument,
    InvalidChunkConfig,
    ServiceUnreachable,
    UnparseableDocument,
)

logger = logging.getLogger(__name__)

TEI_NS = {"tei": "http://www.tei-c.org/ns/1.0"}

# Words-to-tokens ratio used whenever provider token counts are unavailable.
# Kept as an integer fraction so estimates are exact and platform-independent.
_TOKEN_RATIO_NUM = 133
_TOKEN_RATIO_DEN = 100

DEFAULT_CHUNK_TOKENS = 256
DEFAULT_OVERLAP_TOKENS = 64


def estimate_tokens(text: str) -> int:
    """Estimate the token count of ``text`` as ceil(word_count * 1.33)."""
    words = len(text.split())
    return (words * _TOKEN_RATIO_NUM + _TOKEN_RATIO_DEN - 1) // _TOKEN_RATIO_DEN


@dataclass(frozen=True)
class Section:
    index: int
    heading: str
    text: str

    @property
    def word_count(self) -> int:
        return len(self.text.split())


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    sections: tuple[Section, ...]

    @property
    def word_count(self) -> int:
        return sum(s.word_count for s in self.sections)

    @property
    def text(self) -> str:
        """Full body text, headings included, in section order."""
        parts = []
        for s in self.sections:
            parts.append(f"{s.heading}\n{s.text}" if s.heading else s.text)
        return "\n\n".join(parts)

    @property
    def token_estimate(self) -> int:
        return estimate_tokens(self.text)


@dataclass(frozen=True)
class Passage:
    id: str
    doc_id: str
    section_index: int
    text: str
    token_estimate: int
    start_token: int = 0


def _doc_id(seed: bytes) -> str:
    return hashlib.sha256(seed).hexdigest()[:12]


_HEADING_RE = re.compile(r"^(#+)\s*(.*)$")


def sectionize_plaintext(text: str, title: str = "") -> Document:
    """Split markdown-ish text into sections on ``#`` heading lines.

    Text before the first heading becomes a section with an empty heading;
    a heading-free document yields a single section. Headings whose body is
    empty are dropped.
    """
    if not text.strip():
        raise EmptyDocument("input is empty or all whitespace")

    pending_heading = ""
    buf: list[str] = []
    raw_sections: list[tuple[str, str]] = []

    def flush() -> None:
        body = "\n".join(buf).strip()
        if body:
            raw_sections.append((pending_heading, body))

    for line in text.splitlines():
        m = _HEADING_RE.match(line)
        if m:
            flush()
            pending_heading = m.group(2).strip()
            buf = []
        else:
            buf.append(line)
    flush()

    if not raw_sections:
        raise EmptyDocument("no section has any body text")

    sections = tuple(
        Section(index=i, heading=h, text=t) for i, (h, t) in enumerate(raw_sections)
    )
    return Document(id=_doc_id(text.encode("utf-8")), title=title, sections=sections)


def render_markdown(doc: Document) -> str:
    """Inverse of :func:`sectionize_plaintext` (up to whitespace)."""
    parts = []
    for s in doc.sections:
        parts.append(f"# {s.heading}\n{s.text}" if s.heading else s.text)
    return "\n\n".join(parts)


def window_spans(total_tokens: int, target_tokens: int, stride_tokens: int) -> list[int]:
    """Token-space window start offsets for a span of ``total_tokens``."""
    if total_tokens <= target_tokens:
        return [0]
    n_extra = -(-(total_tokens - target_tokens) // stride_tokens)
    return [i * stride_tokens for i in range(n_extra + 1)]


def chunk_passages(
    doc: Document,
    target_tokens: int = DEFAULT_CHUNK_TOKENS,
    overlap_tokens: int = DEFAULT_OVERLAP_TOKENS,
) -> list[Passage]:
    """Sliding-window passages per section with stride ``target - overlap``.

    Windows are cut at word boundaries sized so the per-passage token
    estimate never exceeds ``target_tokens``; character spans are widened to
    cover every byte of the section (full-coverage invariant).
    """
    if overlap_tokens < 0 or overlap_tokens >= target_tokens:
        raise InvalidChunkConfig(
            f"overlap_tokens ({overlap_tokens}) must be in [0, target_tokens)"
        )
    stride_tokens = target_tokens - overlap_tokens
    # Largest word counts whose estimate stays within the token budgets.
    win_words = max(1, target_tokens * _TOKEN_RATIO_DEN // _TOKEN_RATIO_NUM)
    stride_words = max(1, stride_tokens * _TOKEN_RATIO_DEN // _TOKEN_RATIO_NUM)

    passages: list[Passage] = []
    for section in doc.sections:
        spans = [(m.start(), m.end()) for m in re.finditer(r"\S+", section.text)]
        n_words = len(spans)
        if n_words == 0:
            continue
        if n_words <= win_words:
            n_windows = 1
        else:
            n_windows = -(-(n_words - win_words) // stride_words) + 1

        bounds: list[tuple[int, int, int]] = []
        for w in range(n_windows):
            first = w * stride_words
            last = min(first + win_words, n_words) - 1
            bounds.append((first, spans[first][0], spans[last][1]))
        # Widen spans so adjacent windows always touch and the section edges
        # are included.
        texts: list[tuple[int, str]] = []
        for w, (first, start, end) in enumerate(bounds):
            if w == 0:
                start = 0
            if w == n_windows - 1:
                end = len(section.text)
            elif bounds[w + 1][1] > end:
                end = bounds[w + 1][1]
            texts.append((first, section.text[start:end]))

        for w, (first, chunk) in enumerate(texts):
            n_in_window = min(first + win_words, n_words) - first
            est = (n_in_window * _TOKEN_RATIO_NUM + _TOKEN_RATIO_DEN - 1) // _TOKEN_RATIO_DEN
            passages.append(
                Passage(
                    id=f"{doc.id}:s{section.index:03d}:p{w:03d}",
                    doc_id=doc.id,
                    section_index=section.index,
                    text=chunk,
                    token_estimate=max(1, est),
                    start_token=w * stride_tokens,
                )
            )
    return passages


def _tei_text(elem: ET.Element) -> str:
    return " ".join("".join(elem.itertext()).split())


def parse_structured_document(
    pdf_bytes: bytes,
    service_endpoint: str,
    filename: str = "document.pdf",
    timeout: float = 120.0,
) -> Document:
    """Send a PDF to a GROBID-compatible service and parse the TEI reply.

    ``service_endpoint`` may be the service base URL or the full
    ``processFulltextDocument`` route.
    """
    if not pdf_bytes or not pdf_bytes.strip():
        raise UnparseableDocument("empty byte stream")

    url = service_endpoint
    if "processFulltextDocument" not in url:
        url = url.rstrip("/") + "/api/processFulltextDocument"

    try:
        resp = requests.post(
            url,
            files={"input": (filename, pdf_bytes, "application/pdf")},
            timeout=timeout,
        )
    except requests.RequestException as exc:
        raise ServiceUnreachable(f"structure service at {url}: {exc}") from exc

    if resp.status_code == 204 or (resp.status_code == 200 and not resp.text.strip()):
        raise UnparseableDocument("structure service returned no content")
    if resp.status_code != 200:
        raise ServiceUnreachable(
            f"structure service returned HTTP {resp.status_code}"
        )

    try:
        root = ET.fromstring(resp.text)
    except ET.ParseError as exc:
        raise UnparseableDocument(f"invalid TEI response: {exc}") from exc

    title_elem = root.find(".//tei:titleStmt/tei:title", TEI_NS)
    title = _tei_text(title_elem) if title_elem is not None else ""
    if not title:
        title = re.sub(r"\.pdf$", "", filename, flags=re.IGNORECASE)

    raw_sections: list[tuple[str, str]] = []
    for div in root.findall(".//tei:text/tei:body//tei:div", TEI_NS):
        head = div.find("tei:head", TEI_NS)
        heading = _tei_text(head) if head is not None else ""
        paras = [_tei_text(p) for p in div.findall("tei:p", TEI_NS)]
        body = "\n".join(p for p in paras if p)
        if body:
            raw_sections.append((heading, body))

    if not raw_sections:
        raise UnparseableDocument("structure service returned no body text")

    sections = tuple(
        Section(index=i, heading=h, text=t) for i, (h, t) in enumerate(raw_sections)
    )
    return Document(id=_doc_id(pdf_bytes), title=title, sections=sections)
