"""Comparison systems: key-phrase extraction, key-phrase focused paragraph
builders (coherence-greedy and retrieval-based), and the weighted key-phrase
to section mapping.

Two key-phrase extractor families are implemented: a statistical one (pure
function of the chapter text) and an embedding one (ranked against the whole
chapter embedding); per-chapter results are unioned. Candidate generation
rules are this package's own and parity with any specific external extractor
tool is out of scope.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .corpus import ArticleSection, split_sentences
from .errors import ConfigError
from .generation import ChatSession, GenerationParams
from .resources import load_resource_text, prompt_template
from .retrieval import (
    RetrievalConfig,
    VectorIndex,
    build_query,
    cosine,
    retrieve_for_section,
)
from .reversum import render_documents

_WORD_RE = re.compile(r"[A-Za-z][A-Za-z'’-]*")

_stopwords: frozenset[str] | None = None


def stopwords() -> frozenset[str]:
    global _stopwords
    if _stopwords is None:
        _stopwords = frozenset(
            line.strip()
            for line in load_resource_text("stopwords.txt").splitlines()
            if line.strip()
        )
    return _stopwords


@dataclass(frozen=True)
class KeyPhrase:
    """An extracted key phrase of 1..3 words. ``score`` is extractor-specific:
    lower is better for the statistical extractor, higher is better for the
    embedding extractor."""

    text: str
    n_words: int
    source_chapter: int
    score: float

    def __post_init__(self) -> None:
        if not (1 <= self.n_words <= 3):
            raise ValueError(f"key phrase must have 1..3 words, got {self.n_words}")


@dataclass(frozen=True)
class MappingWeights:
    alpha: float = 3.0
    beta: float = 2.0
    gamma: float = 1.0


def _sentences_tokens(text: str) -> list[list[str]]:
    return [_WORD_RE.findall(s) for s in split_sentences(text)]


def _candidate_ngrams(
    sent_tokens: list[list[str]], max_words: int
) -> list[tuple[str, tuple[str, ...]]]:
    """Contiguous n-grams within a sentence, stopword-free, each token of at
    least 2 letters. Returns (normalized text, lowered token tuple) pairs in
    first-occurrence order, deduplicated."""
    sw = stopwords()
    seen: set[str] = set()
    out: list[tuple[str, tuple[str, ...]]] = []
    for tokens in sent_tokens:
        lowered = [t.lower() for t in tokens]
        usable = [
            len(t) >= 2 and low not in sw for t, low in zip(tokens, lowered)
        ]
        for n in range(1, max_words + 1):
            for i in range(len(tokens) - n + 1):
                if not all(usable[i : i + n]):
                    continue
                gram = tuple(lowered[i : i + n])
                text = " ".join(gram)
                if text not in seen:
                    seen.add(text)
                    out.append((text, gram))
    return out


def _token_jaccard(a: str, b: str) -> float:
    sa, sb = set(a.split()), set(b.split())
    if not sa or not sb:
        return 0.0
    return len(sa & sb) / len(sa | sb)


def _suppress_near_duplicates(ranked: list[KeyPhrase], top_n: int) -> list[KeyPhrase]:
    # normalized-token Jaccard >= 0.8 counts as a duplicate
    kept: list[KeyPhrase] = []
    for kp in ranked:
        if any(_token_jaccard(kp.text, k.text) >= 0.8 for k in kept):
            continue
        kept.append(kp)
        if len(kept) == top_n:
            break
    return kept


def extract_keyphrases_statistical(
    chapter_text: str,
    top_n: int = 5,
    max_words: int = 3,
    source_chapter: int = 0,
) -> list[KeyPhrase]:
    """Statistical key-phrase extraction; a pure function of the chapter text.

    Term weights combine frequency, first-occurrence position, capitalization,
    and sentence spread; candidate scores multiply term weights and divide by
    candidate frequency, so lower is better. Near-duplicates (token Jaccard
    >= 0.8) are suppressed before taking the top ``top_n``.
    """
    if not chapter_text.strip():
        return []
    if not (1 <= max_words <= 3):
        raise ConfigError(f"max_words must be 1..3, got {max_words}")
    sent_tokens = _sentences_tokens(chapter_text)
    n_sentences = max(len(sent_tokens), 1)

    tf: dict[str, int] = {}
    first_pos: dict[str, int] = {}
    cap_count: dict[str, int] = {}
    sent_ids: dict[str, set[int]] = {}
    word_index = 0
    for s_id, tokens in enumerate(sent_tokens):
        for tok in tokens:
            low = tok.lower()
            tf[low] = tf.get(low, 0) + 1
            first_pos.setdefault(low, word_index)
            if tok[0].isupper():
                cap_count[low] = cap_count.get(low, 0) + 1
            sent_ids.setdefault(low, set()).add(s_id)
            word_index += 1
    total_words = max(word_index, 1)
    max_tf = max(tf.values(), default=1)

    def term_weight(term: str) -> float:
        freq = tf[term] / max_tf
        pos = first_pos[term] / total_words
        cap = cap_count.get(term, 0) / tf[term]
        spread = len(sent_ids[term]) / n_sentences
        return (1.0 + pos) / (freq + cap + spread + 1e-9)

    gram_tf: dict[str, int] = {}
    candidates = _candidate_ngrams(sent_tokens, max_words)
    for tokens in sent_tokens:
        lowered = [t.lower() for t in tokens]
        for n in range(1, max_words + 1):
            for i in range(len(lowered) - n + 1):
                gram_tf[" ".join(lowered[i : i + n])] = (
                    gram_tf.get(" ".join(lowered[i : i + n]), 0) + 1
                )

    scored: list[KeyPhrase] = []
    for text, gram in candidates:
        weights = [term_weight(t) for t in gram]
        prod = 1.0
        for w in weights:
            prod *= w
        score = prod / (gram_tf[text] * (1.0 + sum(weights)))
        scored.append(
            KeyPhrase(
                text=text,
                n_words=len(gram),
                source_chapter=source_chapter,
                score=score,
            )
        )
    scored.sort(key=lambda kp: (kp.score, kp.text))
    return _suppress_near_duplicates(scored, top_n)


def extract_keyphrases_embedding(
    chapter_text: str,
    backend,
    top_n: int = 5,
    max_words: int = 3,
    source_chapter: int = 0,
) -> list[KeyPhrase]:
    """Embedding key-phrase extraction: candidates ranked by cosine similarity
    to the whole-chapter embedding, descending."""
    if not chapter_text.strip():
        return []
    candidates = _candidate_ngrams(_sentences_tokens(chapter_text), max_words)
    if not candidates:
        return []
    texts = [text for text, _ in candidates]
    vectors = backend.embed([chapter_text] + texts)
    chapter_vec = vectors[0]
    ranked = [
        KeyPhrase(
            text=text,
            n_words=len(gram),
            source_chapter=source_chapter,
            score=cosine(chapter_vec, vectors[1 + i]),
        )
        for i, (text, gram) in enumerate(candidates)
    ]
    ranked.sort(key=lambda kp: (-kp.score, kp.text))
    return _suppress_near_duplicates(ranked, top_n)


def union_keyphrases(lists) -> list[KeyPhrase]:
    """Text-normalized union; the first occurrence keeps its provenance."""
    seen: set[str] = set()
    out: list[KeyPhrase] = []
    for kps in lists:
        for kp in kps:
            norm = " ".join(kp.text.lower().split())
            if norm not in seen:
                seen.add(norm)
                out.append(kp)
    return out


class MeanAdjacentCoherenceScorer:
    """Default paragraph coherence score: mean embedding cosine of adjacent
    sentence pairs (0 for fewer than two sentences). Pluggable: anything
    callable text -> float works in its place."""

    def __init__(self, backend):
        self.backend = backend

    def __call__(self, text: str) -> float:
        sentences = split_sentences(text)
        if len(sentences) < 2:
            return 0.0
        vectors = self.backend.embed(sentences)
        sims = [
            cosine(vectors[i], vectors[i + 1]) for i in range(len(vectors) - 1)
        ]
        return float(sum(sims) / len(sims))


def build_paragraph_coherence(
    keyphrase: str,
    chapter_sentences,
    embed_backend,
    scorer=None,
    pool_size: int = 20,
) -> str:
    """Greedy coherence paragraph: seed with the sentence most similar to the
    key phrase, then walk the remaining top-``pool_size`` sentences in
    similarity order, appending each only when the coherence score improves."""
    sentences = [s for s in chapter_sentences if s.strip()]
    if not sentences:
        raise ValueError("need at least one sentence")
    if scorer is None:
        scorer = MeanAdjacentCoherenceScorer(embed_backend)
    vectors = embed_backend.embed([keyphrase] + sentences)
    kp_vec = vectors[0]
    sims = [cosine(kp_vec, vectors[1 + i]) for i in range(len(sentences))]
    order = sorted(range(len(sentences)), key=lambda i: (-sims[i], i))[:pool_size]
    paragraph = sentences[order[0]]
    current = scorer(paragraph)
    for i in order[1:]:
        candidate = f"{paragraph} {sentences[i]}"
        updated = scorer(candidate)
        if updated > current:
            paragraph = candidate
            current = updated
    return paragraph


@dataclass(frozen=True)
class RagParagraph:
    text: str
    blocked: bool


def build_paragraph_rag(
    keyphrase: str,
    index: VectorIndex,
    gen_backend,
    embed_backend,
    cfg: RetrievalConfig,
    params: GenerationParams,
) -> RagParagraph:
    """Retrieve chunks with the key phrase as the query, then generate one
    paragraph over them. Empty (blocked) when retrieval falls under the
    similarity threshold."""
    section = ArticleSection(title=keyphrase, content="", index=0)
    result = retrieve_for_section(index, section, embed_backend, cfg)
    if result.blocked:
        return RagParagraph(text="", blocked=True)
    prompt = prompt_template("paragraph_generation").format(
        keyphrase=keyphrase,
        documents=render_documents([sc.chunk.text for sc in result.chunks]),
    )
    session = ChatSession()
    session.user(prompt)
    return RagParagraph(text=gen_backend.complete(session, params), blocked=False)


METHOD_COHERENCE = "coherence"
METHOD_RAG_MAP = "rag-map"


def map_section_keyphrases(
    section: ArticleSection,
    keyphrases,
    paragraphs,
    weights: MappingWeights,
    embed_backend,
    top_n: int = 5,
) -> list[tuple[KeyPhrase, str, float]]:
    """Rank (key phrase, paragraph) pairs against a section with
    alpha*sim(S, kp) - beta*sim(S, P) + gamma*sim(kp, P); the beta term pushes
    away paragraphs that just restate the section."""
    keyphrases = list(keyphrases)
    paragraphs = list(paragraphs)
    if len(keyphrases) != len(paragraphs):
        raise ValueError(
            f"{len(keyphrases)} key phrases but {len(paragraphs)} paragraphs"
        )
    if not keyphrases:
        return []
    section_text = build_query(section)
    texts = [section_text] + [kp.text for kp in keyphrases] + paragraphs
    vectors = embed_backend.embed(texts)
    s_vec = vectors[0]
    n = len(keyphrases)
    ranked: list[tuple[KeyPhrase, str, float]] = []
    for j in range(n):
        kp_vec = vectors[1 + j]
        p_vec = vectors[1 + n + j]
        score = (
            weights.alpha * cosine(s_vec, kp_vec)
            - weights.beta * cosine(s_vec, p_vec)
            + weights.gamma * cosine(kp_vec, p_vec)
        )
        ranked.append((keyphrases[j], paragraphs[j], score))
    ranked.sort(key=lambda item: (-item[2], item[0].text))
    return ranked[:top_n]


def enrich_article_baseline(
    article,
    narrative,
    backends,
    settings,
    method: str,
    weights: MappingWeights | None = None,
    top_n: int = 5,
):
    """Baseline enrichment driver: per-chapter key phrases (statistical and
    embedding families, unioned), one focused paragraph per key phrase, then
    the weighted mapping picks the best paragraph per section.

    Emits the same outcome records as the staged pipeline with the method
    field distinguishing them, so metrics and analysis consume all methods
    uniformly.
    """
    from .corpus import chunk_document
    from .reversum import (
        REASON_SUMMARY,
        EnrichmentOutcome,
        StageRecord,
    )

    if method not in (METHOD_COHERENCE, METHOD_RAG_MAP):
        raise ValueError(f"unknown baseline method {method!r}")
    weights = weights or MappingWeights()
    embed = backends.embedding

    if narrative.chapters:
        chapters = [
            (i, narrative.chapter_text(ch)) for i, ch in enumerate(narrative.chapters)
        ]
    else:
        chapters = [(0, narrative.full_text)]

    per_chapter: list[list[KeyPhrase]] = []
    for ordinal, text in chapters:
        per_chapter.append(
            extract_keyphrases_statistical(text, top_n=top_n, source_chapter=ordinal)
        )
        per_chapter.append(
            extract_keyphrases_embedding(
                text, embed, top_n=top_n, source_chapter=ordinal
            )
        )
    keyphrases = union_keyphrases(per_chapter)

    index = None
    if method == METHOD_RAG_MAP:
        chunks = chunk_document(
            narrative, chunk_size=settings.chunk_size, overlap=settings.overlap
        )
        index = VectorIndex.build(chunks, embed)

    usable: list[tuple[KeyPhrase, str]] = []
    blocked_keyphrases = 0
    for kp in keyphrases:
        if method == METHOD_COHERENCE:
            sentences = split_sentences(chapters[kp.source_chapter][1])
            if not sentences:
                continue
            paragraph = build_paragraph_coherence(kp.text, sentences, embed)
        else:
            result = build_paragraph_rag(
                kp.text,
                index,
                backends.generation,
                embed,
                settings.retrieval,
                settings.generation,
            )
            if result.blocked:
                blocked_keyphrases += 1
                continue
            paragraph = result.text
        if paragraph.strip():
            usable.append((kp, paragraph))

    outcomes = []
    for section in article.sections:
        trace: list[StageRecord] = []
        if not usable:
            trace.append(
                StageRecord(
                    stage="keyphrase_mapping",
                    info={
                        "keyphrases": len(keyphrases),
                        "blocked_keyphrases": blocked_keyphrases,
                        "no_usable_paragraphs": True,
                    },
                )
            )
            outcomes.append(
                EnrichmentOutcome(
                    person_name=article.person_name,
                    section_title=section.title,
                    section_index=section.index,
                    method=method,
                    expanded=False,
                    generated=None,
                    reason=REASON_SUMMARY,
                    original=section.content,
                    trace=trace,
                )
            )
            continue
        ranked = map_section_keyphrases(
            section,
            [kp for kp, _ in usable],
            [p for _, p in usable],
            weights,
            embed,
            top_n=top_n,
        )
        best_kp, best_paragraph, best_score = ranked[0]
        trace.append(
            StageRecord(
                stage="keyphrase_mapping",
                parsed=[
                    {"keyphrase": kp.text, "score": score} for kp, _, score in ranked
                ],
                info={
                    "selected": best_kp.text,
                    "selected_score": best_score,
                    "blocked_keyphrases": blocked_keyphrases,
                },
            )
        )
        outcomes.append(
            EnrichmentOutcome(
                person_name=article.person_name,
                section_title=section.title,
                section_index=section.index,
                method=method,
                expanded=True,
                generated=best_paragraph,
                reason=None,
                original=section.content,
                trace=trace,
            )
        )
    return outcomes
