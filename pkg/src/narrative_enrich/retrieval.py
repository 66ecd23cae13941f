"""Embedding backends, in-memory vector index, and MMR retrieval.

The index is exact brute-force nearest-neighbor: one narrative yields at most
a few thousand chunks, which never justifies an approximate structure. A
deterministic offline embedding backend (seeded hashed bag-of-tokens) ships
for tests and fully offline runs.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

import numpy as np
import requests

from . import kernels
from .corpus import ArticleSection, Chunk
from .errors import BackendError, ConfigError

_TOKEN_RE = re.compile(r"[a-z0-9]+")

ENV_EMBED_URL = "NARRATIVE_ENRICH_EMBED_URL"
ENV_EMBED_KEY = "NARRATIVE_ENRICH_EMBED_KEY"


@dataclass(frozen=True)
class RetrievalConfig:
    """Knobs for the retrieval phase.

    ``k`` retained results after MMR, ``candidate_pool`` nearest neighbors
    fetched before the re-rank, ``mmr_lambda`` the relevance/diversity
    trade-off, ``threshold`` the minimum best-candidate similarity below which
    a section is not expandable.
    """

    k: int = 4
    candidate_pool: int = 20
    mmr_lambda: float = 0.5
    threshold: float = 0.3

    def __post_init__(self) -> None:
        if not (1 <= self.k <= self.candidate_pool):
            raise ConfigError(
                f"retrieval needs 1 <= k <= candidate_pool, got k={self.k} "
                f"candidate_pool={self.candidate_pool}"
            )
        if not (0.0 <= self.mmr_lambda <= 1.0):
            raise ConfigError(f"mmr_lambda must be in [0, 1], got {self.mmr_lambda}")


@dataclass(frozen=True)
class ScoredChunk:
    chunk: Chunk
    similarity: float


@dataclass(frozen=True)
class RetrievalResult:
    """MMR-selected chunks, or a blocked signal when the best candidate falls
    under the similarity threshold."""

    chunks: tuple[ScoredChunk, ...]
    max_similarity: float
    blocked: bool


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class HashEmbeddingBackend:
    """Deterministic offline embedder: seeded signed token hashing projected
    to a fixed dimension, L2-normalized. Safe for concurrent use."""

    def __init__(self, dim: int = 256, seed: int = 0):
        if dim <= 0:
            raise ConfigError(f"embedding dimension must be positive, got {dim}")
        self.dim = dim
        self.seed = seed

    def embed(self, texts) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            vec = np.asarray(
                kernels.token_projection(tokenize(text), self.dim, self.seed),
                dtype=np.float64,
            )
            norm = float(np.linalg.norm(vec))
            out[i] = vec / norm if norm > 0.0 else vec
        return out


class HTTPEmbeddingBackend:
    """Remote embedder speaking the wire contract:
    POST {"texts": [...]} -> {"vectors": [[...], ...]} with constant dimension."""

    def __init__(self, url: str, key: str | None = None, timeout: float = 30.0):
        self.url = url
        self.key = key
        self.timeout = timeout

    @classmethod
    def from_env(cls) -> "HTTPEmbeddingBackend":
        url = os.environ.get(ENV_EMBED_URL)
        if not url:
            raise ConfigError(f"{ENV_EMBED_URL} is not set")
        return cls(url, key=os.environ.get(ENV_EMBED_KEY))

    def embed(self, texts) -> np.ndarray:
        headers = {"Content-Type": "application/json"}
        if self.key:
            headers["Authorization"] = f"Bearer {self.key}"
        payload = {"texts": list(texts)}
        last_exc: Exception | None = None
        for _ in range(2):  # one retry on transport failure
            try:
                resp = requests.post(
                    self.url, json=payload, headers=headers, timeout=self.timeout
                )
                break
            except requests.RequestException as exc:
                last_exc = exc
        else:
            raise BackendError(f"embedding backend unreachable: {last_exc}")
        if resp.status_code != 200:
            raise BackendError(
                f"embedding backend returned HTTP {resp.status_code}: {resp.text[:200]}"
            )
        try:
            vectors = resp.json()["vectors"]
        except (ValueError, KeyError) as exc:
            raise BackendError(f"malformed embedding response: {exc}") from exc
        arr = np.asarray(vectors, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != len(texts):
            raise BackendError(
                f"embedding response has shape {arr.shape}, expected ({len(texts)}, dim)"
            )
        if not np.all(np.isfinite(arr)):
            raise BackendError("embedding response contains non-finite values")
        return arr


@dataclass(frozen=True)
class VectorIndex:
    """Immutable chunk/vector store; safe for concurrent reads."""

    dimension: int
    chunks: tuple[Chunk, ...]
    matrix: np.ndarray  # (n_chunks, dimension)
    norms: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.matrix.shape != (len(self.chunks), self.dimension):
            raise ValueError(
                f"matrix shape {self.matrix.shape} does not match "
                f"{len(self.chunks)} chunks x dim {self.dimension}"
            )
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("index vectors must be finite")
        object.__setattr__(self, "norms", np.linalg.norm(self.matrix, axis=1))
        self.matrix.setflags(write=False)

    def __len__(self) -> int:
        return len(self.chunks)

    @classmethod
    def build(cls, chunks, backend, batch_size: int = 64) -> "VectorIndex":
        chunks = tuple(chunks)
        if not chunks:
            raise ValueError("cannot build an index over zero chunks")
        parts = []
        for i in range(0, len(chunks), batch_size):
            parts.append(backend.embed([c.text for c in chunks[i : i + batch_size]]))
        matrix = np.vstack(parts).astype(np.float64)
        return cls(dimension=matrix.shape[1], chunks=chunks, matrix=matrix)


def build_query(section: ArticleSection) -> str:
    """Retrieval query: section title and content joined by a newline."""
    return f"{section.title}\n{section.content}"


def cosine(a, b) -> float:
    """Cosine similarity; zero-vector input yields 0.0 by convention."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape or va.ndim != 1:
        raise ValueError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(va, vb) / (na * nb))


def _query_similarities(index: VectorIndex, query_vec: np.ndarray) -> np.ndarray:
    qnorm = float(np.linalg.norm(query_vec))
    if qnorm == 0.0:
        return np.zeros(len(index))
    denom = index.norms * qnorm
    sims = np.zeros(len(index))
    nonzero = denom > 0.0
    sims[nonzero] = (index.matrix[nonzero] @ query_vec) / denom[nonzero]
    return sims


def _candidate_pool(index: VectorIndex, sims: np.ndarray, pool: int) -> list[int]:
    # descending similarity, ties toward lower chunk seq
    order = sorted(range(len(index)), key=lambda i: (-sims[i], index.chunks[i].seq))
    return order[: min(pool, len(index))]


def mmr_select(
    index: VectorIndex, query_vec, cfg: RetrievalConfig
) -> list[ScoredChunk]:
    """Fetch the candidate pool by cosine, then greedily select k chunks
    maximizing lam*sim(query, c) - (1-lam)*max_selected sim(c, s). Ties break
    toward the lower chunk seq; output is in selection order."""
    if len(index) == 0:
        raise ValueError("cannot retrieve from an empty index")
    query_vec = np.asarray(query_vec, dtype=np.float64)
    if query_vec.shape != (index.dimension,):
        raise ValueError(
            f"query vector has shape {query_vec.shape}, index dimension {index.dimension}"
        )
    sims = _query_similarities(index, query_vec)
    pool = _candidate_pool(index, sims, cfg.candidate_pool)
    pool_sims = np.ascontiguousarray(sims[pool], dtype=np.float64)
    pool_vecs = np.ascontiguousarray(index.matrix[pool], dtype=np.float64)
    pool_seqs = np.ascontiguousarray(
        [index.chunks[i].seq for i in pool], dtype=np.int64
    )
    order = kernels.mmr_order(pool_sims, pool_vecs, pool_seqs, cfg.k, cfg.mmr_lambda)
    return [
        ScoredChunk(chunk=index.chunks[pool[j]], similarity=float(pool_sims[j]))
        for j in order
    ]


def retrieve_for_section(
    index: VectorIndex, section: ArticleSection, backend, cfg: RetrievalConfig
) -> RetrievalResult:
    """Retrieve MMR-selected chunks for a section query.

    When the best candidate similarity falls below ``cfg.threshold`` the
    result is flagged blocked and no text generation should happen downstream.
    Backend failures raise; they are never folded into the blocked signal.
    """
    query_vec = backend.embed([build_query(section)])[0]
    sims = _query_similarities(index, np.asarray(query_vec, dtype=np.float64))
    max_sim = float(sims.max()) if len(sims) else 0.0
    if max_sim < cfg.threshold:
        return RetrievalResult(chunks=(), max_similarity=max_sim, blocked=True)
    selected = mmr_select(index, query_vec, cfg)
    return RetrievalResult(
        chunks=tuple(selected), max_similarity=max_sim, blocked=False
    )
