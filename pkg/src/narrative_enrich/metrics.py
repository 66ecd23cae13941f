"""Text statistics, readability indices, composite quality metrics, deltas.

The composite weights and the readability formula constants live in the
table-of-truth dicts below and nowhere else. Absolute composite magnitudes
are unit-dependent (raw character/word counts feed them); deltas between an
original and an enriched text are the comparable quantities.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from . import kernels
from .corpus import split_sentences
from .errors import BackendError, CapabilityError
from .generation import ChatSession, GenerationParams, TokenChoiceProbe
from .resources import prompt_template

# Composite weights.
INFORMATIVENESS_WEIGHTS = {
    "page_size": 0.12,
    "sentences": 0.151,
    "words": 0.154,
    "complex_words": 0.155,
}
READABILITY_WEIGHTS = {
    "fk_grade": 0.213,
    "coleman_liau": 0.185,
    "pct_complex_words": 0.26,
    "avg_syllables_per_word": 0.253,
}
UNDERSTANDABILITY_WEIGHTS = {
    "gunning_fog": 0.393,
    "smog": 0.352,
    "ari": 0.181,
    "avg_words_per_sentence": 0.344,
}
QUALITY_WEIGHTS = {
    "informativeness": 0.255,
    "readability": 0.654,
    "understandability": 0.557,
}

# Standard published readability formula constants.
FORMULA_CONSTANTS = {
    "fk": (0.39, 11.8, -15.59),
    "coleman_liau": (0.0588, -0.296, -15.8),
    "gunning_fog": 0.4,
    "smog": (1.0430, 30.0, 3.1291),
    "ari": (4.71, 0.5, -21.43),
}

_WORD_RE = re.compile(r"[^\W_]+(?:['’][^\W_]+)*", re.UNICODE)

AFFIRMATIVE_TOKEN = "yes"
NEGATIVE_TOKEN = "no"


@dataclass(frozen=True)
class TextStats:
    page_size: int
    sentences: int
    words: int
    complex_words: int
    syllables: int
    letters: int


@dataclass(frozen=True)
class ReadabilityIndices:
    fk_grade: float
    coleman_liau: float
    gunning_fog: float
    smog: float
    ari: float
    pct_complex_words: float
    avg_syllables_per_word: float
    avg_words_per_sentence: float


@dataclass(frozen=True)
class Composites:
    informativeness: float
    readability: float
    understandability: float
    quality: float


@dataclass(frozen=True)
class QualityReport:
    """Metrics of an (original, generated) pair. Absolute composites describe
    the enriched text; deltas are enriched minus original."""

    informativeness: float
    readability: float
    understandability: float
    quality: float
    delta_informativeness: float
    delta_readability: float
    delta_understandability: float
    delta_quality: float
    new_word_fraction: float
    continuation_score: float
    calibrated_informativeness: float
    continuation_coarse: bool = False

    def to_dict(self) -> dict:
        return {
            "informativeness": self.informativeness,
            "readability": self.readability,
            "understandability": self.understandability,
            "quality": self.quality,
            "delta_informativeness": self.delta_informativeness,
            "delta_readability": self.delta_readability,
            "delta_understandability": self.delta_understandability,
            "delta_quality": self.delta_quality,
            "new_word_fraction": self.new_word_fraction,
            "continuation_score": self.continuation_score,
            "calibrated_informativeness": self.calibrated_informativeness,
            "continuation_coarse": self.continuation_coarse,
        }


def words_of(text: str) -> list[str]:
    return _WORD_RE.findall(text)


def text_stats(text: str) -> TextStats:
    """Counts feeding the composites. Sentences use the corpus sentence
    splitter; syllables use the package's deterministic heuristic (parity with
    any external library is a non-goal); complex words have >= 3 syllables."""
    words = words_of(text)
    syllables, complex_words = kernels.syllable_totals(words)
    return TextStats(
        page_size=len(text),
        sentences=len(split_sentences(text)),
        words=len(words),
        complex_words=complex_words,
        syllables=int(syllables),
        letters=sum(1 for c in text if c.isalpha()),
    )


def readability_indices(stats: TextStats) -> ReadabilityIndices:
    """The five standard indices plus the two per-unit averages. All are
    defined as 0 when the text has no words or no sentences."""
    w, s = stats.words, stats.sentences
    if w < 1 or s < 1:
        return ReadabilityIndices(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    wps = w / s
    spw = stats.syllables / w
    lpw = stats.letters / w
    cw_frac = stats.complex_words / w
    a, b, c = FORMULA_CONSTANTS["fk"]
    fk = a * wps + b * spw + c
    a, b, c = FORMULA_CONSTANTS["coleman_liau"]
    cli = a * (100.0 * lpw) + b * (100.0 * s / w) + c
    gf = FORMULA_CONSTANTS["gunning_fog"] * (wps + 100.0 * cw_frac)
    a, b, c = FORMULA_CONSTANTS["smog"]
    smog = a * (stats.complex_words * b / s) ** 0.5 + c
    a, b, c = FORMULA_CONSTANTS["ari"]
    ari = a * lpw + b * wps + c
    return ReadabilityIndices(
        fk_grade=fk,
        coleman_liau=cli,
        gunning_fog=gf,
        smog=smog,
        ari=ari,
        pct_complex_words=100.0 * cw_frac,
        avg_syllables_per_word=spw,
        avg_words_per_sentence=wps,
    )


def composites(stats: TextStats, indices: ReadabilityIndices) -> Composites:
    w = INFORMATIVENESS_WEIGHTS
    inf = (
        w["page_size"] * stats.page_size
        + w["sentences"] * stats.sentences
        + w["words"] * stats.words
        + w["complex_words"] * stats.complex_words
    )
    w = READABILITY_WEIGHTS
    read = (
        w["fk_grade"] * indices.fk_grade
        + w["coleman_liau"] * indices.coleman_liau
        + w["pct_complex_words"] * indices.pct_complex_words
        + w["avg_syllables_per_word"] * indices.avg_syllables_per_word
    )
    w = UNDERSTANDABILITY_WEIGHTS
    und = (
        w["gunning_fog"] * indices.gunning_fog
        + w["smog"] * indices.smog
        + w["ari"] * indices.ari
        + w["avg_words_per_sentence"] * indices.avg_words_per_sentence
    )
    w = QUALITY_WEIGHTS
    quality = (
        w["informativeness"] * inf
        + w["readability"] * read
        + w["understandability"] * und
    )
    return Composites(
        informativeness=inf, readability=read, understandability=und, quality=quality
    )


def composites_of(text: str) -> Composites:
    stats = text_stats(text)
    return composites(stats, readability_indices(stats))


def _norm_tokens(text: str) -> list[str]:
    return [w.lower().strip("'’") for w in words_of(text)]


def new_word_fraction(original: str, generated: str) -> float:
    """Distinct generated token types absent from the original, over total
    generated tokens. Empty generated text scores 0."""
    gen_tokens = _norm_tokens(generated)
    if not gen_tokens:
        return 0.0
    orig_vocab = set(_norm_tokens(original))
    new_types = {t for t in gen_tokens if t not in orig_vocab}
    return len(new_types) / len(gen_tokens)


def join_enriched(original: str, generated: str) -> str:
    """Assemble the enriched text: generated content appended as a new
    paragraph."""
    if not generated:
        return original
    if not original:
        return generated
    return f"{original}\n{generated}"


def continuation_prompt(original: str, generated: str) -> str:
    return prompt_template("continuation").format(
        existing_content=original, generated_content=generated
    )


def continuation_score(
    original: str, generated: str, backend
) -> tuple[float, bool]:
    """How appropriately the generated text continues the original, as
    p(yes) / (p(yes) + p(no)) over unnormalized next-token probabilities.

    Backends without probability support fall back to generating a yes/no
    answer scored 1.0/0.0; the returned flag marks that coarse path.
    """
    prompt = continuation_prompt(original, generated)
    probe = TokenChoiceProbe(prompt=prompt, candidates=(AFFIRMATIVE_TOKEN, NEGATIVE_TOKEN))
    if getattr(backend, "supports_probabilities", False):
        values = backend.token_probabilities(probe)
        if len(values) != 2 or any(v < 0 for v in values):
            raise BackendError(f"invalid probe values {values!r}")
        p_yes, p_no = values
        if p_yes + p_no == 0:
            return 0.5, False
        return p_yes / (p_yes + p_no), False
    session = ChatSession()
    session.user(prompt)
    response = backend.complete(session, GenerationParams(sample=False))
    m = re.search(r"\b(yes|no)\b", response.lower())
    if not m:
        raise BackendError(f"coarse continuation scorer got no yes/no: {response[:80]!r}")
    return (1.0 if m.group(1) == "yes" else 0.0), True


def ci_delta(
    delta_informativeness: float, fraction_new: float, continuation: float
) -> float:
    """Calibrated informativeness delta: the informativeness delta scaled by
    how much of the added text is new and how well it continues the section."""
    return delta_informativeness * fraction_new * continuation


def calibrated_informativeness(
    original: str, generated: str, scorer_backend
) -> QualityReport:
    """Full pair report: composites of the enriched text, deltas against the
    original, and the calibrated informativeness delta."""
    enriched = join_enriched(original, generated)
    before = composites_of(original)
    after = composites_of(enriched)
    if generated:
        fraction = new_word_fraction(original, generated)
        score, coarse = continuation_score(original, generated, scorer_backend)
    else:
        fraction, score, coarse = 0.0, 0.0, False
    d_inf = after.informativeness - before.informativeness
    return QualityReport(
        informativeness=after.informativeness,
        readability=after.readability,
        understandability=after.understandability,
        quality=after.quality,
        delta_informativeness=d_inf,
        delta_readability=after.readability - before.readability,
        delta_understandability=after.understandability - before.understandability,
        delta_quality=after.quality - before.quality,
        new_word_fraction=fraction,
        continuation_score=score,
        calibrated_informativeness=ci_delta(d_inf, fraction, score),
        continuation_coarse=coarse,
    )
