"""Narrative and article ingestion: chapters, sentences, overlapping chunks.

All operations are pure functions over immutable inputs. Offsets and lengths
are measured in Unicode scalar values, never bytes, so spans are
encoding-independent.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .errors import CorpusError
from .resources import load_resource_json

# Lines that open a chapter in scanned-book style front matter, e.g.
# "CHAPTER IV" or "Part 2: The War Years".
_CHAPTER_RE = re.compile(
    r"^[ \t]*(?:CHAPTER|PART)\s+(?:[IVXLCDM]+|\d+)\b[^\n]*$",
    re.IGNORECASE | re.MULTILINE,
)

_SENTENCE_BREAK_RE = re.compile(r"(?<=[.!?])\s+")


@dataclass(frozen=True)
class Chapter:
    title: str
    start: int
    end: int  # half-open


@dataclass(frozen=True)
class NarrativeDocument:
    """A personal narrative (autobiography or biography) used as the external
    knowledge source for one article subject."""

    id: str
    subject_name: str
    full_text: str
    chapters: tuple[Chapter, ...] = ()
    source: str | None = None

    def chapter_text(self, chapter: Chapter) -> str:
        return self.full_text[chapter.start : chapter.end]


@dataclass(frozen=True)
class ArticleSection:
    title: str
    content: str
    index: int


@dataclass(frozen=True)
class Article:
    person_name: str
    sections: tuple[ArticleSection, ...]

    def __post_init__(self) -> None:
        if not self.sections:
            raise CorpusError("article must have at least one section")
        seen: set[str] = set()
        for i, section in enumerate(self.sections):
            if not section.title:
                raise CorpusError(f"section {i} has an empty title")
            if section.index != i:
                raise CorpusError(
                    f"section {section.title!r} has index {section.index}, expected {i}"
                )
            norm = " ".join(section.title.casefold().split())
            if norm in seen:
                raise CorpusError(f"duplicate section title {section.title!r}")
            seen.add(norm)


@dataclass(frozen=True)
class Chunk:
    """One overlapping retrieval unit of a narrative.

    ``relative_position`` is the chunk ordinal normalized to [0, 1] within its
    document, used by the positional-relevance analysis.
    """

    doc_id: str
    seq: int
    start: int
    end: int  # half-open
    text: str
    relative_position: float


def normalize_text(text: str) -> str:
    """Normalize line endings to LF."""
    return text.replace("\r\n", "\n").replace("\r", "\n")


def load_narrative(path: str | Path, subject_name: str) -> NarrativeDocument:
    """Read a plain-text narrative file for ``subject_name``.

    Decoding is UTF-8 with lossy replacement (scanned-book exports are noisy).
    Raises CorpusError for unreadable files or empty text.
    """
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8", errors="replace")
    except OSError as exc:
        raise CorpusError(f"cannot read narrative file {path}: {exc}") from exc
    text = normalize_text(raw)
    if not text.strip():
        raise CorpusError(f"narrative file {path} is empty after normalization")
    chapters = tuple(
        Chapter(title, start, end) for title, (start, end) in detect_chapters(text)
    )
    return NarrativeDocument(
        id=path.stem, subject_name=subject_name, full_text=text, chapters=chapters
    )


def detect_chapters(text: str) -> list[tuple[str, tuple[int, int]]]:
    """Locate chapter headings and the body span that follows each.

    A heading is a line starting with CHAPTER or PART followed by a Roman or
    Arabic numeral (case-insensitive). Each returned span covers the body
    between the end of its heading line and the start of the next heading
    (exclusive of both heading lines); text before the first heading belongs
    to no chapter. Empty list when nothing matches.
    """
    matches = list(_CHAPTER_RE.finditer(text))
    chapters: list[tuple[str, tuple[int, int]]] = []
    for i, m in enumerate(matches):
        body_start = m.end()
        if body_start < len(text) and text[body_start] == "\n":
            body_start += 1
        body_end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        chapters.append((m.group(0).strip(), (body_start, body_end)))
    return chapters


def split_sentences(text: str) -> list[str]:
    """Split on sentence breaks (".", "!", "?") followed by whitespace.

    Terminators stay attached to their sentence; a trailing fragment without a
    terminator is kept; empty segments are dropped.
    """
    if not text.strip():
        return []
    parts = _SENTENCE_BREAK_RE.split(text.strip())
    return [p.strip() for p in parts if p.strip()]


def _find_cut(text: str, start: int, limit: int) -> int:
    """Best cut position in (start, limit] by separator priority:
    paragraph break > line break > sentence break > space > hard cut."""
    # paragraph break: cut after the blank line
    p = text.rfind("\n\n", start, limit)
    if p > start:
        return p + 2
    # line break
    p = text.rfind("\n", start + 1, limit)
    if p >= start + 1:
        return p + 1
    # sentence terminator followed by whitespace (or at the window edge)
    for p in range(limit - 1, start, -1):
        if text[p] in ".!?" and (p + 1 >= len(text) or text[p + 1].isspace()):
            return p + 1
    # space
    for p in range(limit - 1, start, -1):
        if text[p] == " " or text[p] == "\t":
            return p + 1
    return limit


def recursive_split(
    text: str, doc_id: str = "", chunk_size: int = 1000, overlap: int = 200
) -> list[Chunk]:
    """Split ``text`` into overlapping chunks of at most ``chunk_size`` chars.

    Cut points prefer, in order: paragraph break, line break, sentence break,
    space, hard character cut. Consecutive spans overlap by at most
    ``overlap`` characters and their union covers the whole text.
    """
    if chunk_size <= 0 or overlap < 0 or chunk_size <= overlap:
        raise ValueError(
            f"need chunk_size > overlap >= 0, got chunk_size={chunk_size} overlap={overlap}"
        )
    n = len(text)
    spans: list[tuple[int, int]] = []
    if n == 0:
        return []
    start = 0
    while True:
        limit = start + chunk_size
        if limit >= n:
            spans.append((start, n))
            break
        cut = _find_cut(text, start, limit)
        spans.append((start, cut))
        start = max(cut - overlap, start + 1)
    total = len(spans)
    return [
        Chunk(
            doc_id=doc_id,
            seq=i,
            start=s,
            end=e,
            text=text[s:e],
            relative_position=i / max(total - 1, 1),
        )
        for i, (s, e) in enumerate(spans)
    ]


def chunk_document(
    doc: NarrativeDocument, chunk_size: int = 1000, overlap: int = 200
) -> list[Chunk]:
    return recursive_split(
        doc.full_text, doc_id=doc.id, chunk_size=chunk_size, overlap=overlap
    )


_article_schema = None


def article_schema() -> dict:
    global _article_schema
    if _article_schema is None:
        _article_schema = load_resource_json("article.schema.json")
    return _article_schema


def load_article(path: str | Path) -> Article:
    """Load an article file: JSON with ``person_name`` and ordered ``sections``
    of ``{title, content}`` records (schema in resources/article.schema.json)."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise CorpusError(f"cannot read article file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CorpusError(f"article file {path} is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(data, article_schema())
    except jsonschema.ValidationError as exc:
        raise CorpusError(f"article file {path} failed validation: {exc.message}") from exc
    sections = tuple(
        ArticleSection(title=s["title"], content=s.get("content", ""), index=i)
        for i, s in enumerate(data["sections"])
    )
    return Article(person_name=data["person_name"], sections=sections)


def dump_article(article: Article) -> dict:
    return {
        "person_name": article.person_name,
        "sections": [
            {"title": s.title, "content": s.content} for s in article.sections
        ],
    }
