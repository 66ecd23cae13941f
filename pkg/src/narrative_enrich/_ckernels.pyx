# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel implementations.

Hot inner loops behind :mod:`narrative_enrich.kernels`: syllable counting over
book-length texts, signed token hashing for the offline embedder, and the
greedy MMR re-rank. Mirrors ``_pykernels`` operation for operation; keep the
two in sync.
"""

from libc.stdlib cimport free, malloc

IMPL = "cython"

cdef unsigned long long _FNV_BASIS = 0xCBF29CE484222325ULL
cdef unsigned long long _FNV_PRIME = 0x100000001B3ULL


cdef inline bint _is_vowel(Py_UCS4 c):
    return c == u'a' or c == u'e' or c == u'i' or c == u'o' or c == u'u' or c == u'y'


cpdef int syllable_count(str word):
    """Count syllables with a vowel-group heuristic (see _pykernels)."""
    cdef str w = ''.join([c for c in word.lower() if u'a' <= c <= u'z'])
    cdef Py_ssize_t n = len(w)
    if n == 0:
        return 0
    cdef int groups = 0
    cdef bint prev = False
    cdef bint is_v
    cdef Py_ssize_t i
    cdef Py_UCS4 c
    for i in range(n):
        c = w[i]
        is_v = _is_vowel(c) and not (c == u'y' and i == 0)
        if is_v and not prev:
            groups += 1
        prev = is_v
    cdef Py_UCS4 last, prev1, prev2
    if groups > 1:
        last = w[n - 1]
        prev1 = w[n - 2] if n >= 2 else u'\0'
        prev2 = w[n - 3] if n >= 3 else u'\0'
        if n >= 2 and last == u'e':
            if prev1 != u'l' and not _is_vowel(prev1):
                groups -= 1
        elif n >= 3 and last == u'd' and prev1 == u'e':
            if prev2 != u't' and prev2 != u'd' and not _is_vowel(prev2):
                groups -= 1
        elif n >= 3 and last == u's' and prev1 == u'e':
            if (prev2 != u's' and prev2 != u'x' and prev2 != u'z'
                    and prev2 != u'c' and prev2 != u'h'
                    and not _is_vowel(prev2)):
                groups -= 1
    return groups if groups > 0 else 1


cpdef tuple syllable_totals(words):
    """Total syllables and count of complex words (>= 3 syllables)."""
    cdef long total = 0
    cdef long complex_count = 0
    cdef int s
    for w in words:
        s = syllable_count(w)
        total += s
        if s >= 3:
            complex_count += 1
    return total, complex_count


cdef unsigned long long _fnv1a64(unsigned long long seed, const unsigned char[:] data):
    cdef unsigned long long h = _FNV_BASIS
    cdef int i
    for i in range(8):
        h ^= (seed >> (8 * i)) & 0xFFULL
        h *= _FNV_PRIME
    cdef Py_ssize_t j
    for j in range(data.shape[0]):
        h ^= data[j]
        h *= _FNV_PRIME
    return h


cpdef list token_projection(tokens, int dim, unsigned long long seed):
    """Signed hashed bag-of-tokens vector of length ``dim`` (unnormalized)."""
    cdef double* vec = <double*> malloc(dim * sizeof(double))
    if vec == NULL:
        raise MemoryError()
    cdef int i
    for i in range(dim):
        vec[i] = 0.0
    cdef unsigned long long h
    cdef int idx
    cdef bytes data
    try:
        for tok in tokens:
            data = tok.encode("utf-8")
            h = _fnv1a64(seed, data)
            idx = <int> (h % <unsigned long long> dim)
            if (h >> 63) & 1ULL:
                vec[idx] -= 1.0
            else:
                vec[idx] += 1.0
        return [vec[i] for i in range(dim)]
    finally:
        free(vec)


cdef double _norm_row(const double[:, :] v, Py_ssize_t row):
    cdef double acc = 0.0
    cdef Py_ssize_t j
    for j in range(v.shape[1]):
        acc += v[row, j] * v[row, j]
    return acc ** 0.5


cdef double _cosine_rows(const double[:, :] v, Py_ssize_t a, Py_ssize_t b,
                         double na, double nb):
    if na == 0.0 or nb == 0.0:
        return 0.0
    cdef double dot = 0.0
    cdef Py_ssize_t j
    for j in range(v.shape[1]):
        dot += v[a, j] * v[b, j]
    return dot / (na * nb)


cpdef list mmr_order(const double[:] query_sims, const double[:, :] vectors,
                     const long long[:] seqs, int k, double lam):
    """Greedy MMR ordering; see _pykernels.mmr_order for the contract."""
    cdef Py_ssize_t n = query_sims.shape[0]
    if n == 0 or k <= 0:
        return []
    if k > n:
        k = <int> n
    cdef double* norms = <double*> malloc(n * sizeof(double))
    cdef double* best_sel_sim = <double*> malloc(n * sizeof(double))
    cdef char* active = <char*> malloc(n * sizeof(char))
    if norms == NULL or best_sel_sim == NULL or active == NULL:
        free(norms); free(best_sel_sim); free(active)
        raise MemoryError()
    cdef list selected = []
    cdef Py_ssize_t i, best_i
    cdef double score, best_score, c
    cdef long long best_seq
    try:
        for i in range(n):
            norms[i] = _norm_row(vectors, i)
            best_sel_sim[i] = 0.0
            active[i] = 1
        while len(selected) < k:
            best_i = -1
            best_score = 0.0
            best_seq = 0
            for i in range(n):
                if not active[i]:
                    continue
                score = lam * query_sims[i] - (1.0 - lam) * best_sel_sim[i]
                if (best_i < 0 or score > best_score
                        or (score == best_score and seqs[i] < best_seq)):
                    best_i = i
                    best_score = score
                    best_seq = seqs[i]
            selected.append(best_i)
            active[best_i] = 0
            for i in range(n):
                if active[i]:
                    c = _cosine_rows(vectors, best_i, i, norms[best_i], norms[i])
                    if c > best_sel_sim[i]:
                        best_sel_sim[i] = c
        return selected
    finally:
        free(norms)
        free(best_sel_sim)
        free(active)
