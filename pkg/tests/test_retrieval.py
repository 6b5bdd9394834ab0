import pytest

from conftest import make_records, random_unit_vectors
from ragengine.embedding import MockEmbeddingProvider, embed_texts
from ragengine.errors import ProviderMismatch, UnknownSession
from ragengine.retrieval import (
    EMPTY_CONTEXT_MARKER,
    RetrievedChunk,
    SessionStore,
    retrieve,
    serialize_results,
    update_session,
)
from ragengine.vindex import QueryResult, VectorIndex, VectorRecord


def build_corpus(texts):
    """Index a list of chunk texts with the mock embedder."""
    provider = MockEmbeddingProvider()
    index = VectorIndex()
    index.embedding_provider_id = provider.provider_id
    chunk_texts = {}
    records = []
    for i, text in enumerate(texts):
        chunk_id = f"doc-{i}:0"
        vec = embed_texts(provider, [text])[0]
        records.append(
            VectorRecord(
                vector_id=chunk_id,
                embedding=vec,
                chunk_id=chunk_id,
                doc_id=f"doc-{i}",
                metadata={"doc_id": f"doc-{i}", "chunk_id": chunk_id, "seq": "0"},
            )
        )
        chunk_texts[chunk_id] = text
    index.upsert(records)
    return index, provider, chunk_texts


# -- retrieve ---------------------------------------------------------------


def test_retrieve_empty_index():
    provider = MockEmbeddingProvider()
    index = VectorIndex()
    bundle = retrieve("anything", 4, index, provider, {})
    assert bundle.results == ()
    assert bundle.serialized == EMPTY_CONTEXT_MARKER


def test_retrieve_fixture_ranking():
    index, provider, chunk_texts = build_corpus([
        "Gigasporaceae tolerate low pH",
        "Stock markets closed higher on Friday",
        "Recipe for sourdough bread with rye flour",
    ])
    bundle = retrieve("which family tolerates low pH", 3, index, provider, chunk_texts)
    assert bundle.results[0].result.vector_id == "doc-0:0"
    assert bundle.results[0].text == "Gigasporaceae tolerate low pH"
    assert bundle.results[0].tag == "[S1]"


def test_retrieve_provider_mismatch():
    index, _, chunk_texts = build_corpus(["abc"])

    class Other(MockEmbeddingProvider):
        provider_id = "other-provider"

    with pytest.raises(ProviderMismatch):
        retrieve("q", 4, index, Other(), chunk_texts)


def test_retrieve_empty_query():
    index, provider, chunk_texts = build_corpus(["abc"])
    with pytest.raises(ValueError):
        retrieve("   ", 4, index, provider, chunk_texts)


def test_retrieve_at_most_k():
    index, provider, chunk_texts = build_corpus([f"text number {i}" for i in range(10)])
    bundle = retrieve("text number", 4, index, provider, chunk_texts)
    assert len(bundle.results) == 4
    assert bundle.tags() == ["[S1]", "[S2]", "[S3]", "[S4]"]


def test_self_retrieval_property():
    texts = [f"unique chunk body {i} with mycorrhiza detail" for i in range(15)]
    index, provider, chunk_texts = build_corpus(texts)
    for i, text in enumerate(texts):
        bundle = retrieve(text, 1, index, provider, chunk_texts)
        assert bundle.results[0].result.vector_id == f"doc-{i}:0"
        assert bundle.results[0].result.score == pytest.approx(1.0, abs=1e-6)


# -- serialization ----------------------------------------------------------


def _rc(rank, vector_id, score, text, title=None):
    meta = {"doc_id": "d1", "seq": "2", "chunk_id": vector_id}
    if title:
        meta["title"] = title
    return RetrievedChunk(rank=rank, result=QueryResult(vector_id, score, meta), text=text)


def test_serialize_empty():
    assert serialize_results([]) == EMPTY_CONTEXT_MARKER


def test_serialize_two_results_tags():
    out = serialize_results([_rc(1, "a:0", 0.9, "alpha"), _rc(2, "b:0", 0.8, "beta")])
    assert out.count("[S1]") == 1
    assert out.count("[S2]") == 1
    assert out.index("[S1]") < out.index("[S2]")
    assert "alpha" in out and "beta" in out


def test_serialize_score_rounding():
    out = serialize_results([_rc(1, "a:0", 0.87654, "t")])
    assert "score=0.8765" in out


def test_serialize_header_fields():
    out = serialize_results([_rc(1, "a:0", 0.5, "body", title="My Paper")])
    assert out.splitlines()[0] == "[S1] My Paper (doc=d1, chunk=2, score=0.5000)"
    assert out.splitlines()[1] == "body"


def test_serialize_deterministic():
    results = [_rc(1, "a:0", 0.9, "x"), _rc(2, "b:0", 0.8, "y")]
    assert serialize_results(results) == serialize_results(results)


# -- sessions ---------------------------------------------------------------


def dummy_bundle():
    provider = MockEmbeddingProvider()
    return retrieve("q", 1, VectorIndex(), provider, {})


def test_session_append_one_turn():
    store = SessionStore()
    s = store.create()
    update_session(s, "q1", dummy_bundle(), "a1")
    assert len(s.turns) == 1
    assert s.turns[0].question == "q1"


def test_session_memory_budget():
    store = SessionStore(memory_budget=4)
    s = store.create()
    b = dummy_bundle()
    for i in range(6):
        update_session(s, f"q{i + 1}", b, f"a{i + 1}")
    recent = s.recent_turns()
    assert [t.question for t in recent] == ["q3", "q4", "q5", "q6"]
    assert len(s.turns) == 6  # full history kept, only the prompt view is bounded


def test_session_unknown():
    store = SessionStore()
    with pytest.raises(UnknownSession):
        store.get("missing")


def test_session_get_or_create():
    store = SessionStore()
    s = store.get_or_create(None)
    assert store.get(s.session_id) is s
    again = store.get_or_create(s.session_id)
    assert again is s


def test_session_idle_expiry(monkeypatch):
    store = SessionStore(idle_ttl=10.0)
    s = store.create()
    s.last_used -= 100.0  # simulate idleness beyond the TTL
    with pytest.raises(UnknownSession):
        store.get(s.session_id)


def test_session_monotonic_turns():
    store = SessionStore()
    s = store.create()
    b = dummy_bundle()
    update_session(s, "q1", b, "a1")
    first = s.turns[0]
    update_session(s, "q2", b, "a2")
    assert s.turns[0] is first  # prior turns never mutated
    assert s.turns[0].at <= s.turns[1].at
