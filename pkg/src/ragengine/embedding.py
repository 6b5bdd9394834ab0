"""Embedding providers and vector helpers (384-d unit-norm vectors)."""

from __future__ import annotations

import zlib
from typing import List, Protocol, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyText, ProviderUnavailable, ZeroVector

DIM = 384


class EmbeddingProvider(Protocol):
    provider_id: str
    dim: int
    max_chars: int

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """Return an (n, dim) float array, one row per input text."""
        ...


def unit_normalize(v: np.ndarray) -> np.ndarray:
    """Scale a 384-vector to unit L2 norm."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (DIM,):
        raise DimensionMismatch(f"expected shape ({DIM},), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ZeroVector("vector has non-finite components")
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ZeroVector("cannot normalize the zero vector")
    return v / norm


class MockEmbeddingProvider:
    """Deterministic offline provider hashing character trigrams into buckets.

    Texts sharing many trigrams land close in cosine space, which is enough
    for retrieval tests without a real encoder.
    """

    provider_id = "mock-trigram-v1"
    dim = DIM
    max_chars = 8192

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.empty((len(texts), DIM), dtype=np.float64)
        for i, text in enumerate(texts):
            out[i] = self._embed_one(text)
        return out

    def _embed_one(self, text: str) -> np.ndarray:
        if not text:
            raise EmptyText("cannot embed empty text")
        t = text.lower()
        grams = [t[j : j + 3] for j in range(len(t) - 2)] or [t]
        v = np.zeros(DIM, dtype=np.float64)
        for g in grams:
            h = zlib.crc32(g.encode("utf-8"))
            sign = 1.0 if (h >> 9) & 1 else -1.0
            v[h % DIM] += sign
        if not v.any():
            # All-sign cancellation: fall back to a single deterministic bucket.
            v[zlib.crc32(t.encode("utf-8")) % DIM] = 1.0
        return v / np.linalg.norm(v)


class HTTPEmbeddingProvider:
    """Adapter for a remote embedder: POST {"texts": [...]} -> {"vectors": [[...]]}."""

    dim = DIM

    def __init__(self, endpoint: str, api_key: str = "", provider_id: str = "http-embedder",
                 max_chars: int = 8192, timeout: float = 30.0):
        self.endpoint = endpoint
        self.api_key = api_key
        self.provider_id = provider_id
        self.max_chars = max_chars
        self.timeout = timeout

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        import requests

        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(
                self.endpoint, json={"texts": list(texts)}, headers=headers, timeout=self.timeout
            )
            resp.raise_for_status()
            vectors = resp.json()["vectors"]
        except Exception as exc:
            raise ProviderUnavailable(f"embedding endpoint failed: {exc}") from exc
        return np.asarray(vectors, dtype=np.float64)


def embed_texts(provider: EmbeddingProvider, texts: Sequence[str]) -> List[np.ndarray]:
    """Embed a batch, unit-normalizing and averaging sub-pieces of oversized texts."""
    if not texts:
        raise EmptyText("texts must be non-empty")
    for t in texts:
        if not t:
            raise EmptyText("cannot embed empty text")

    budget = provider.max_chars
    pieces: List[str] = []
    owners: List[int] = []
    for i, t in enumerate(texts):
        if len(t) <= budget:
            pieces.append(t)
            owners.append(i)
        else:
            for s in range(0, len(t), budget):
                pieces.append(t[s : s + budget])
                owners.append(i)

    raw = np.asarray(provider.embed(pieces), dtype=np.float64)
    if raw.ndim != 2 or raw.shape != (len(pieces), DIM):
        raise DimensionMismatch(
            f"provider {provider.provider_id} returned shape {raw.shape}, "
            f"expected ({len(pieces)}, {DIM})"
        )

    out: List[np.ndarray] = []
    for i in range(len(texts)):
        rows = raw[[j for j, o in enumerate(owners) if o == i]]
        mean = rows.mean(axis=0)
        out.append(unit_normalize(mean))
    return out
