from __future__ import annotations

import numpy as np
import pytest

from narrative_enrich.corpus import Article, ArticleSection, Chunk
from narrative_enrich.generation import GenerationBackend


class StubEmbeddingBackend:
    """Maps exact texts to fixed vectors; unknown texts get a deterministic
    fallback so index building never fails by accident."""

    def __init__(self, table: dict, dim: int, default=None):
        self.table = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}
        self.dim = dim
        self.default = (
            np.asarray(default, dtype=np.float64) if default is not None else None
        )
        self.requests: list[list[str]] = []

    def embed(self, texts):
        self.requests.append(list(texts))
        out = np.zeros((len(texts), self.dim))
        for i, text in enumerate(texts):
            if text in self.table:
                out[i] = self.table[text]
            elif self.default is not None:
                out[i] = self.default
            else:
                raise KeyError(f"stub embedding has no vector for {text[:60]!r}")
        return out


class ConstantProbeBackend(GenerationBackend):
    """Probability-probe backend returning fixed values."""

    supports_probabilities = True

    def __init__(self, values):
        super().__init__()
        self.values = list(values)

    def token_probabilities(self, probe):
        self._count_probe()
        return list(self.values)


def make_chunks(texts, doc_id="doc"):
    total = len(texts)
    return tuple(
        Chunk(
            doc_id=doc_id,
            seq=i,
            start=i * 100,
            end=i * 100 + len(t),
            text=t,
            relative_position=i / max(total - 1, 1),
        )
        for i, t in enumerate(texts)
    )


def fan_vectors(n: int, dim: int, angles=None):
    """Query-aligned vectors that are mutually near-orthogonal: vector i has
    cos(angle_i) along axis 0 and sin(angle_i) along axis 1+i. With the query
    on axis 0, query similarity decreases with angle while pairwise document
    similarities stay small, so MMR keeps the similarity order."""
    if angles is None:
        angles = [0.2 + 0.15 * i for i in range(n)]
    assert dim >= n + 1
    out = []
    for i, ang in enumerate(angles):
        v = np.zeros(dim)
        v[0] = np.cos(ang)
        v[1 + i] = np.sin(ang)
        out.append(v)
    return out


def single_section_article(person: str, title: str, content: str) -> Article:
    return Article(person, (ArticleSection(title, content, 0),))


@pytest.fixture
def fast_archive_bucket(monkeypatch):
    from narrative_enrich import archive_client

    monkeypatch.setattr(archive_client._bucket, "interval", 0.0)
    monkeypatch.setattr(archive_client._bucket, "_next_free", 0.0)
    return archive_client._bucket
