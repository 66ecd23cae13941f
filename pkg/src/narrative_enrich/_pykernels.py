"""Pure-Python kernel implementations.

Fallback for :mod:`narrative_enrich._ckernels`. The two are kept in lockstep:
identical operation order for all floating-point work, so the compiled and
interpreted paths select identical MMR orderings and produce identical
projection vectors. Any change here must be mirrored in ``_ckernels.pyx``.
"""

from __future__ import annotations

IMPL = "python"

_FNV_BASIS = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

_VOWELS = "aeiouy"


def syllable_count(word: str) -> int:
    """Count syllables with a vowel-group heuristic.

    Maximal vowel runs (y vocalic except word-initially) with corrections for
    silent trailing -e and the usually-silent -ed/-es endings. Words with no
    letters count 0; anything else counts at least 1.
    """
    w = [c for c in word.lower() if "a" <= c <= "z"]
    n = len(w)
    if n == 0:
        return 0
    groups = 0
    prev = False
    for i in range(n):
        c = w[i]
        is_v = c in _VOWELS and not (c == "y" and i == 0)
        if is_v and not prev:
            groups += 1
        prev = is_v
    if groups > 1:
        if n >= 2 and w[-1] == "e":
            # silent e, but keep -le ("table") and vowel+e ("agree")
            if w[-2] != "l" and w[-2] not in _VOWELS:
                groups -= 1
        elif n >= 3 and w[-1] == "d" and w[-2] == "e":
            if w[-3] not in "td" and w[-3] not in _VOWELS:
                groups -= 1
        elif n >= 3 and w[-1] == "s" and w[-2] == "e":
            if w[-3] not in "sxzch" and w[-3] not in _VOWELS:
                groups -= 1
    return groups if groups > 0 else 1


def syllable_totals(words) -> tuple[int, int]:
    """Total syllables and count of complex words (>= 3 syllables)."""
    total = 0
    complex_count = 0
    for w in words:
        s = syllable_count(w)
        total += s
        if s >= 3:
            complex_count += 1
    return total, complex_count


def _fnv1a64(seed: int, data: bytes) -> int:
    h = _FNV_BASIS
    for i in range(8):
        h ^= (seed >> (8 * i)) & 0xFF
        h = (h * _FNV_PRIME) & _MASK64
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


def token_projection(tokens, dim: int, seed: int) -> list[float]:
    """Signed hashed bag-of-tokens vector of length ``dim`` (unnormalized)."""
    vec = [0.0] * dim
    for tok in tokens:
        h = _fnv1a64(seed, tok.encode("utf-8"))
        idx = h % dim
        if (h >> 63) & 1:
            vec[idx] -= 1.0
        else:
            vec[idx] += 1.0
    return vec


def _norm(v) -> float:
    acc = 0.0
    for x in v:
        acc += x * x
    return acc ** 0.5


def _cosine_raw(a, b, na: float, nb: float) -> float:
    if na == 0.0 or nb == 0.0:
        return 0.0
    dot = 0.0
    for i in range(len(a)):
        dot += a[i] * b[i]
    return dot / (na * nb)


def mmr_order(query_sims, vectors, seqs, k: int, lam: float) -> list[int]:
    """Greedy maximum-marginal-relevance ordering over a candidate pool.

    ``query_sims[i]`` is the candidate's similarity to the query and
    ``vectors[i]`` its embedding (used for the pairwise diversity term).
    Score: lam * query_sim - (1 - lam) * max cosine to already-selected.
    Exact score ties break toward the lower ``seqs`` value. Returns selected
    candidate indices in selection order.
    """
    n = len(query_sims)
    if n == 0 or k <= 0:
        return []
    k = min(k, n)
    norms = [_norm(vectors[i]) for i in range(n)]
    best_sel_sim = [0.0] * n
    active = [True] * n
    selected: list[int] = []
    while len(selected) < k:
        best_i = -1
        best_score = 0.0
        best_seq = 0
        for i in range(n):
            if not active[i]:
                continue
            score = lam * query_sims[i] - (1.0 - lam) * best_sel_sim[i]
            if (
                best_i < 0
                or score > best_score
                or (score == best_score and seqs[i] < best_seq)
            ):
                best_i = i
                best_score = score
                best_seq = seqs[i]
        selected.append(best_i)
        active[best_i] = False
        for i in range(n):
            if active[i]:
                c = _cosine_raw(vectors[best_i], vectors[i], norms[best_i], norms[i])
                if c > best_sel_sim[i]:
                    best_sel_sim[i] = c
    return selected
