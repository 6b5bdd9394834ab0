import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ragengine.embedding import (
    DIM,
    MockEmbeddingProvider,
    embed_texts,
    unit_normalize,
)
from ragengine.errors import DimensionMismatch, EmptyText, ZeroVector


# -- unit_normalize ---------------------------------------------------------


def test_unit_normalize_3_4_5():
    v = np.zeros(DIM)
    v[0], v[1] = 3.0, 4.0
    out = unit_normalize(v)
    assert out[0] == pytest.approx(0.6)
    assert out[1] == pytest.approx(0.8)
    assert np.linalg.norm(out) == pytest.approx(1.0, abs=1e-9)


def test_unit_normalize_zero_vector():
    with pytest.raises(ZeroVector):
        unit_normalize(np.zeros(DIM))


def test_unit_normalize_nonfinite():
    v = np.zeros(DIM)
    v[0] = np.inf
    with pytest.raises(ZeroVector):
        unit_normalize(v)


def test_unit_normalize_wrong_shape():
    with pytest.raises(DimensionMismatch):
        unit_normalize(np.ones(100))


def test_unit_normalize_idempotent(rng):
    v = unit_normalize(rng.standard_normal(DIM))
    assert np.allclose(unit_normalize(v), v, atol=1e-9)


# -- mock provider ----------------------------------------------------------


def test_mock_deterministic():
    p = MockEmbeddingProvider()
    a = p.embed(["tomato"])
    b = p.embed(["tomato"])
    assert np.array_equal(a, b)


def test_mock_locality():
    p = MockEmbeddingProvider()
    fungi, fungus, market = (
        p.embed(["mycorrhizal fungi", "mycorrhizal fungus", "stock market index"])
    )
    assert fungi @ fungus > fungi @ market


def test_mock_norms_many(rng):
    import random

    r = random.Random(7)
    alphabet = "abcdefghij \nxyz"
    texts = ["".join(r.choice(alphabet) for _ in range(r.randrange(1, 60))) for _ in range(1000)]
    vecs = MockEmbeddingProvider().embed(texts)
    norms = np.linalg.norm(vecs, axis=1)
    assert np.all(np.abs(norms - 1.0) < 1e-6)


def test_mock_empty_text():
    with pytest.raises(EmptyText):
        MockEmbeddingProvider().embed([""])


def test_mock_short_text():
    # shorter than one trigram still embeds deterministically
    v = MockEmbeddingProvider().embed(["ab"])
    assert np.linalg.norm(v[0]) == pytest.approx(1.0, abs=1e-9)


# -- embed_texts ------------------------------------------------------------


def test_embed_texts_order_and_determinism():
    p = MockEmbeddingProvider()
    out = embed_texts(p, ["a", "a", "b"])
    assert np.array_equal(out[0], out[1])
    assert not np.array_equal(out[0], out[2])


def test_embed_texts_empty_batch():
    with pytest.raises(EmptyText):
        embed_texts(MockEmbeddingProvider(), [])


def test_embed_texts_empty_member():
    with pytest.raises(EmptyText):
        embed_texts(MockEmbeddingProvider(), ["ok", ""])


def test_embed_texts_wrong_dim_provider():
    class Bad:
        provider_id = "bad"
        dim = 100
        max_chars = 8192

        def embed(self, texts):
            return np.ones((len(texts), 100))

    with pytest.raises(DimensionMismatch):
        embed_texts(Bad(), ["x"])


def test_embed_texts_oversized_averaging():
    p = MockEmbeddingProvider()
    big = "abcdefgh " * 2000  # 18000 chars > max_chars 8192
    (avg,) = embed_texts(p, [big])
    assert np.linalg.norm(avg) == pytest.approx(1.0, abs=1e-9)
    # oracle: split into provider-budget pieces, embed, average, renormalize
    pieces = [big[s : s + p.max_chars] for s in range(0, len(big), p.max_chars)]
    mean = p.embed(pieces).mean(axis=0)
    expected = mean / np.linalg.norm(mean)
    assert np.allclose(avg, expected, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.text(alphabet="abcdef gh\n", min_size=1, max_size=200))
def test_embed_self_similarity(text):
    p = MockEmbeddingProvider()
    a, b = embed_texts(p, [text, text])
    assert float(a @ b) == pytest.approx(1.0, abs=1e-9)
