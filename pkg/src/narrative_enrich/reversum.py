"""The four-stage enrichment pipeline over retrieved narrative chunks.

Stages: relevance detection -> evidence extraction -> evidence verification
-> summary generation, each with a pinned prompt template and an exact
sentinel phrase the model emits when it cannot proceed. Relevance detection,
evidence extraction, and summarization share one chat session; verification
always runs in a fresh session that sees only the retrieved chunks and the
extracted evidences, which is the pipeline's main guard against carrying
hallucinated context forward.

Every stage appends a StageRecord to the outcome trace, so a run is fully
replayable and auditable. Non-expansion is data, not an error: backend and
transport failures raise instead, and never masquerade as sentinel outcomes.
"""

from __future__ import annotations

import re
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .corpus import Article, ArticleSection, chunk_document
from .errors import TemplateError
from .generation import ChatSession, GenerationBackend, GenerationParams
from .resources import prompt_template
from .retrieval import (
    RetrievalConfig,
    RetrievalResult,
    VectorIndex,
    build_query,
    retrieve_for_section,
)

# Stage-attributed reasons for declining to expand a section, in pipeline order.
REASON_RETRIEVAL = "retrieval"
REASON_RELEVANCE = "relevance_detection"
REASON_EVIDENCE = "evidence_collection"
REASON_VERIFICATION = "evidence_verification"
REASON_SUMMARY = "summary_generation"
NON_EXPANSION_REASONS = (
    REASON_RETRIEVAL,
    REASON_RELEVANCE,
    REASON_EVIDENCE,
    REASON_VERIFICATION,
    REASON_SUMMARY,
)

SENTINEL_NO_RELEVANT_DOCS = "No documents are relevant"
SENTINEL_NO_EVIDENCE = "No evidence."
SENTINEL_NONE_VERIFIED = "None."
SENTINEL_NOT_POSSIBLE = "Not possible."

# Patterns that mark a refusal in the single-prompt direct-generation path.
DEFAULT_REFUSAL_PATTERNS = (
    SENTINEL_NO_RELEVANT_DOCS,
    SENTINEL_NO_EVIDENCE,
    SENTINEL_NONE_VERIFIED,
    SENTINEL_NOT_POSSIBLE,
    "not possible to expand",
)

METHOD_REVERSUM = "reversum"
METHOD_STANDARD_RAG = "standard-rag"

_NUMBERED_ITEM_RE = re.compile(r"^\s*(\d+)\s*[.):]\s*(.*\S)\s*$")
_CITATION_RE = re.compile(r"\(\s*Document\s+(\d+)\s*\)", re.IGNORECASE)
_INT_RE = re.compile(r"\d+")


def matches_sentinel(response: str, sentinel: str) -> bool:
    """Case-insensitive sentinel detection with trailing-punctuation
    tolerance: either the sentinel occurs as a substring, or the whole
    response equals the sentinel ignoring trailing punctuation and quotes."""
    resp = response.strip().strip("\"'").lower()
    sent = sentinel.lower()
    if sent in resp:
        return True
    return resp.rstrip(string.punctuation).strip() == sent.rstrip(
        string.punctuation
    ).strip()


def is_refusal(response: str, patterns=DEFAULT_REFUSAL_PATTERNS) -> bool:
    return any(matches_sentinel(response, p) for p in patterns)


def render_documents(chunk_texts) -> str:
    return "\n".join(
        f"Document {i}: {text}" for i, text in enumerate(chunk_texts, start=1)
    )


def render_evidences(texts) -> str:
    return "\n".join(f"{i}. {text}" for i, text in enumerate(texts, start=1))


def render_template(name: str, **values: str) -> str:
    """Render a stored prompt template; unbound placeholders are an error."""
    template = prompt_template(name)
    fields = {
        fname
        for _, fname, _, _ in string.Formatter().parse(template)
        if fname is not None
    }
    missing = fields - values.keys()
    if missing:
        raise TemplateError(
            f"template {name!r} is missing values for {sorted(missing)}"
        )
    return template.format(**{k: values[k] for k in fields})


def parse_document_ordinals(response: str, n_chunks: int) -> list[int]:
    """Pull document ordinals out of a relevance response.

    Accepts "Document 2", bare integers, comma/and-separated lists. Ordinals
    outside 1..n_chunks are dropped; order of first mention is kept."""
    seen: list[int] = []
    for raw in _INT_RE.findall(response):
        value = int(raw)
        if 1 <= value <= n_chunks and value not in seen:
            seen.append(value)
    return seen


def parse_numbered_items(response: str) -> list[tuple[int, str]]:
    """Parse "N. text" lines ("N)" and "N:" accepted as fallback)."""
    items: list[tuple[int, str]] = []
    for line in response.splitlines():
        m = _NUMBERED_ITEM_RE.match(line)
        if m:
            items.append((int(m.group(1)), m.group(2).strip()))
    return items


def extract_citation(text: str, n_chunks: int) -> tuple[str, int | None]:
    """Strip a "(Document N)" citation from an evidence line; citations beyond
    the number of presented chunks are discarded."""
    cited: int | None = None
    m = _CITATION_RE.search(text)
    if m:
        value = int(m.group(1))
        if 1 <= value <= n_chunks:
            cited = value
        text = (text[: m.start()] + text[m.end() :]).strip()
    return text, cited


_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})


def normalize_for_match(text: str) -> str:
    return " ".join(text.lower().translate(_PUNCT_TABLE).split())


def fuzzy_match_evidence(candidate: str, pool) -> bool:
    """True when ``candidate`` fuzzy-matches one of ``pool``: normalized
    containment either way with a length ratio of at least 0.9."""
    a = normalize_for_match(candidate)
    if not a:
        return False
    for other in pool:
        b = normalize_for_match(other)
        if not b:
            continue
        if (a in b or b in a) and min(len(a), len(b)) / max(len(a), len(b)) >= 0.9:
            return True
    return False


@dataclass(frozen=True)
class EvidenceItem:
    """One extracted or verified evidence phrase. ``cited_chunk`` is the
    1-based presentation ordinal parsed from a "(Document N)" citation."""

    index: int
    text: str
    cited_chunk: int | None = None

    def to_dict(self) -> dict:
        return {"index": self.index, "text": self.text, "cited_chunk": self.cited_chunk}


@dataclass(frozen=True)
class StageToggles:
    """Per-stage disable switches for ablation runs. Disabling evidence
    collection also skips verification (there is nothing to verify)."""

    relevance_detection: bool = True
    evidence_collection: bool = True
    evidence_verification: bool = True
    summary_generation: bool = True

    @property
    def verification_active(self) -> bool:
        return self.evidence_verification and self.evidence_collection

    @classmethod
    def ablate(cls, *stages: str) -> "StageToggles":
        known = {
            "relevance_detection",
            "evidence_collection",
            "evidence_verification",
            "summary_generation",
        }
        unknown = set(stages) - known
        if unknown:
            raise ValueError(f"unknown stage(s) to ablate: {sorted(unknown)}")
        return cls(**{name: name not in stages for name in known})


@dataclass
class StageRecord:
    stage: str
    prompt: str | None = None
    response: str | None = None
    parsed: object = None
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "prompt": self.prompt,
            "response": self.response,
            "parsed": self.parsed,
            "info": self.info,
        }


@dataclass
class EnrichmentOutcome:
    """Per-section result: generated text or a stage-attributed non-expansion
    reason, plus the full stage trace."""

    person_name: str
    section_title: str
    section_index: int
    method: str
    expanded: bool
    generated: str | None
    reason: str | None
    original: str
    trace: list[StageRecord]

    def to_dict(self) -> dict:
        return {
            "person_name": self.person_name,
            "section_title": self.section_title,
            "section_index": self.section_index,
            "method": self.method,
            "expanded": self.expanded,
            "generated": self.generated,
            "reason": self.reason,
            "original": self.original,
            "trace": [r.to_dict() for r in self.trace],
        }


@dataclass(frozen=True)
class Backends:
    embedding: object
    generation: GenerationBackend


@dataclass(frozen=True)
class EnrichmentSettings:
    chunk_size: int = 1000
    overlap: int = 200
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    generation: GenerationParams = field(default_factory=GenerationParams)
    toggles: StageToggles = field(default_factory=StageToggles)
    method: str = METHOD_REVERSUM
    refusal_patterns: tuple[str, ...] = DEFAULT_REFUSAL_PATTERNS


def _relevance_prompt(person_name: str, section: ArticleSection, chunks) -> str:
    return render_template(
        "relevance_detection",
        person_name=person_name,
        section_title=section.title,
        section_content=section.content,
        documents=render_documents([c.text for c in chunks]),
    )


def run_standard_rag(
    person_name: str,
    section: ArticleSection,
    chunks,
    backend: GenerationBackend,
    params: GenerationParams,
    refusal_patterns=DEFAULT_REFUSAL_PATTERNS,
) -> tuple[str | None, StageRecord]:
    """Single-prompt direct generation over the retrieved chunks. Returns
    (text, record); text is None when the model declines to expand."""
    if not chunks:
        raise ValueError("standard RAG needs at least one chunk")
    prompt = render_template(
        "standard_rag",
        person_name=person_name,
        section_title=section.title,
        section_content=section.content,
        documents=render_documents([c.text for c in chunks]),
    )
    session = ChatSession()
    session.user(prompt)
    response = backend.complete(session, params)
    session.assistant(response)
    record = StageRecord(stage="standard_rag", prompt=prompt, response=response)
    if is_refusal(response, refusal_patterns):
        record.info["refusal"] = True
        return None, record
    record.parsed = response
    return response, record


def detect_relevance(
    session: ChatSession,
    person_name: str,
    section: ArticleSection,
    chunks,
    backend: GenerationBackend,
    params: GenerationParams,
) -> tuple[list[int] | None, StageRecord]:
    """First stage: ask which presented documents are relevant. Returns the
    parsed 1-based ordinals, or None on the sentinel / an unparseable reply."""
    if len(session) != 0:
        raise ValueError("relevance detection must start a fresh session")
    if not chunks:
        raise ValueError("relevance detection needs at least one chunk")
    prompt = _relevance_prompt(person_name, section, chunks)
    session.user(prompt)
    response = backend.complete(session, params)
    session.assistant(response)
    record = StageRecord(stage=REASON_RELEVANCE, prompt=prompt, response=response)
    if matches_sentinel(response, SENTINEL_NO_RELEVANT_DOCS):
        record.info["sentinel"] = True
        return None, record
    ordinals = parse_document_ordinals(response, len(chunks))
    if not ordinals:
        record.info["parse_failure"] = True
        return None, record
    record.parsed = ordinals
    return ordinals, record


def collect_evidence(
    session: ChatSession,
    backend: GenerationBackend,
    params: GenerationParams,
) -> tuple[list[EvidenceItem] | None, StageRecord]:
    """Second stage: extract evidences from the documents kept at relevance
    detection, continuing that session's history."""
    if len(session) == 0:
        raise ValueError("evidence collection continues the relevance session")
    prompt = render_template("evidence_extraction")
    session.user(prompt)
    response = backend.complete(session, params)
    session.assistant(response)
    record = StageRecord(stage=REASON_EVIDENCE, prompt=prompt, response=response)
    if matches_sentinel(response, SENTINEL_NO_EVIDENCE):
        record.info["sentinel"] = True
        return None, record
    parsed = parse_numbered_items(response)
    if not parsed:
        record.info["parse_failure"] = True
        return None, record
    items = [EvidenceItem(index=i, text=text) for i, text in parsed]
    record.parsed = [it.to_dict() for it in items]
    return items, record


def verify_evidence(
    evidences,
    chunks,
    backend: GenerationBackend,
    params: GenerationParams,
) -> tuple[list[EvidenceItem] | None, StageRecord]:
    """Third stage, in a fresh session that sees only the retrieved chunks and
    the extracted evidences. Retained items that do not fuzzy-match an input
    evidence are dropped, enforcing verified as a subset of extracted."""
    if not evidences:
        raise ValueError("verification needs at least one evidence")
    prompt = render_template(
        "evidence_verification",
        evidences=render_evidences([e.text for e in evidences]),
        documents=render_documents([c.text for c in chunks]),
    )
    session = ChatSession()
    session.user(prompt)
    response = backend.complete(session, params)
    session.assistant(response)
    record = StageRecord(stage=REASON_VERIFICATION, prompt=prompt, response=response)
    if matches_sentinel(response, SENTINEL_NONE_VERIFIED):
        record.info["sentinel"] = True
        return None, record
    input_texts = [e.text for e in evidences]
    survivors: list[EvidenceItem] = []
    dropped = 0
    for idx, raw_text in parse_numbered_items(response):
        text, cited = extract_citation(raw_text, len(chunks))
        if fuzzy_match_evidence(text, input_texts):
            survivors.append(EvidenceItem(index=idx, text=text, cited_chunk=cited))
        else:
            dropped += 1
    if dropped:
        record.info["dropped_unmatched"] = dropped
    if not survivors:
        record.info["no_survivors"] = True
        return None, record
    record.parsed = [it.to_dict() for it in survivors]
    return survivors, record


def summarize(
    session: ChatSession,
    verified,
    backend: GenerationBackend,
    params: GenerationParams,
) -> tuple[str | None, StageRecord]:
    """Final stage: summarize the verified evidences, continuing the
    relevance/evidence session. Only verified evidence texts cross over from
    verification; the verification transcript never does."""
    if len(session) == 0:
        raise ValueError("summarization continues the evidence-collection session")
    if not verified:
        raise ValueError("summarization needs at least one verified evidence")
    prompt = render_template(
        "summary_generation",
        evidences=render_evidences([e.text for e in verified]),
    )
    session.user(prompt)
    response = backend.complete(session, params)
    session.assistant(response)
    record = StageRecord(stage=REASON_SUMMARY, prompt=prompt, response=response)
    if matches_sentinel(response, SENTINEL_NOT_POSSIBLE):
        record.info["sentinel"] = True
        return None, record
    record.parsed = response
    return response, record


def _retrieval_record(result: RetrievalResult, section: ArticleSection) -> StageRecord:
    return StageRecord(
        stage=REASON_RETRIEVAL,
        prompt=build_query(section),
        parsed=[sc.chunk.seq for sc in result.chunks],
        info={
            "blocked": result.blocked,
            "max_similarity": result.max_similarity,
            "similarities": [sc.similarity for sc in result.chunks],
            "relative_positions": [
                sc.chunk.relative_position for sc in result.chunks
            ],
        },
    )


def _not_expanded(
    article: Article,
    section: ArticleSection,
    method: str,
    reason: str,
    trace: list[StageRecord],
) -> EnrichmentOutcome:
    return EnrichmentOutcome(
        person_name=article.person_name,
        section_title=section.title,
        section_index=section.index,
        method=method,
        expanded=False,
        generated=None,
        reason=reason,
        original=section.content,
        trace=trace,
    )


def _expanded(
    article: Article,
    section: ArticleSection,
    method: str,
    text: str,
    trace: list[StageRecord],
) -> EnrichmentOutcome:
    return EnrichmentOutcome(
        person_name=article.person_name,
        section_title=section.title,
        section_index=section.index,
        method=method,
        expanded=True,
        generated=text,
        reason=None,
        original=section.content,
        trace=trace,
    )


def enrich_section(
    article: Article,
    section: ArticleSection,
    index: VectorIndex,
    backends: Backends,
    settings: EnrichmentSettings,
) -> EnrichmentOutcome:
    """Run retrieve -> threshold -> relevance -> evidence -> verify ->
    summarize for one section, honoring the stage toggles. The first failing
    stage names the non-expansion reason; threshold-blocked sections perform
    zero generation calls."""
    trace: list[StageRecord] = []
    result = retrieve_for_section(index, section, backends.embedding, settings.retrieval)
    trace.append(_retrieval_record(result, section))
    if result.blocked:
        return _not_expanded(article, section, settings.method, REASON_RETRIEVAL, trace)
    chunks = [sc.chunk for sc in result.chunks]
    gen = backends.generation
    params = settings.generation

    if settings.method == METHOD_STANDARD_RAG:
        text, record = run_standard_rag(
            article.person_name,
            section,
            chunks,
            gen,
            params,
            settings.refusal_patterns,
        )
        trace.append(record)
        if text is None:
            return _not_expanded(
                article, section, settings.method, REASON_SUMMARY, trace
            )
        return _expanded(article, section, settings.method, text, trace)
    if settings.method != METHOD_REVERSUM:
        raise ValueError(f"unknown enrichment method {settings.method!r}")

    toggles = settings.toggles
    session = ChatSession()

    if toggles.relevance_detection:
        ordinals, record = detect_relevance(
            session, article.person_name, section, chunks, gen, params
        )
        trace.append(record)
        if ordinals is None:
            return _not_expanded(
                article, section, settings.method, REASON_RELEVANCE, trace
            )
    else:
        # Ablation: treat every presented document as relevant. The session is
        # still seeded with the stage prompt plus a synthetic assistant turn so
        # the evidence-collection history reads the same as in a full run, but
        # the backend is never called and the stage leaves no trace record.
        ordinals = list(range(1, len(chunks) + 1))
        prompt = _relevance_prompt(article.person_name, section, chunks)
        session.user(prompt)
        session.assistant(", ".join(str(i) for i in ordinals))

    if toggles.evidence_collection:
        evidences, record = collect_evidence(session, gen, params)
        trace.append(record)
        if evidences is None:
            return _not_expanded(
                article, section, settings.method, REASON_EVIDENCE, trace
            )
    else:
        # Ablation: the relevant chunks themselves stand in as evidences, and
        # verification is skipped with them.
        evidences = [
            EvidenceItem(index=i, text=chunks[o - 1].text, cited_chunk=o)
            for i, o in enumerate(ordinals, start=1)
        ]
        trace.append(
            StageRecord(
                stage=REASON_EVIDENCE,
                parsed=[e.to_dict() for e in evidences],
                info={"skipped": True},
            )
        )

    if toggles.verification_active:
        verified, record = verify_evidence(evidences, chunks, gen, params)
        trace.append(record)
        if verified is None:
            return _not_expanded(
                article, section, settings.method, REASON_VERIFICATION, trace
            )
    else:
        verified = evidences
        trace.append(
            StageRecord(
                stage=REASON_VERIFICATION,
                parsed=[e.to_dict() for e in verified],
                info={
                    "skipped": True,
                    "implied_by_evidence_toggle": not toggles.evidence_collection,
                },
            )
        )

    if toggles.summary_generation:
        summary, record = summarize(session, verified, gen, params)
        trace.append(record)
        if summary is None:
            return _not_expanded(
                article, section, settings.method, REASON_SUMMARY, trace
            )
    else:
        summary = " ".join(e.text for e in verified)
        trace.append(
            StageRecord(
                stage=REASON_SUMMARY,
                parsed=summary,
                info={"skipped": True},
            )
        )

    return _expanded(article, section, settings.method, summary, trace)


def enrich_article(
    article: Article,
    narrative,
    backends: Backends,
    settings: EnrichmentSettings,
    jobs: int = 1,
) -> list[EnrichmentOutcome]:
    """Chunk the narrative, build the index once, then enrich every section
    independently. Outcome order always matches section order."""
    chunks = chunk_document(
        narrative, chunk_size=settings.chunk_size, overlap=settings.overlap
    )
    index = VectorIndex.build(chunks, backends.embedding)
    if jobs <= 1:
        return [
            enrich_section(article, section, index, backends, settings)
            for section in article.sections
        ]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [
            pool.submit(enrich_section, article, section, index, backends, settings)
            for section in article.sections
        ]
        return [f.result() for f in futures]
