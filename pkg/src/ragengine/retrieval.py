"""Query-time retrieval: top-k context bundles, serialization, session memory."""

from __future__ import annotations

import time
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Dict, List, Optional, Tuple

from .embedding import EmbeddingProvider, embed_texts
from .errors import ProviderMismatch, UnknownSession
from .vindex import QueryResult, VectorIndex

EMPTY_CONTEXT_MARKER = "NO CONTEXT RETRIEVED"


@dataclass(frozen=True)
class RetrievedChunk:
    rank: int  # 1-based
    result: QueryResult
    text: str

    @property
    def tag(self) -> str:
        return f"[S{self.rank}]"


@dataclass(frozen=True)
class ContextBundle:
    query_text: str
    results: Tuple[RetrievedChunk, ...]
    serialized: str
    retrieved_at: str

    def tags(self) -> List[str]:
        return [r.tag for r in self.results]


@dataclass
class Turn:
    question: str
    bundle: ContextBundle
    answer: str
    at: float


@dataclass
class ChatSession:
    session_id: str
    memory_budget: int = 4
    turns: List[Turn] = field(default_factory=list)
    last_used: float = field(default_factory=time.time)

    def recent_turns(self) -> List[Turn]:
        return self.turns[-self.memory_budget :] if self.memory_budget > 0 else []


def serialize_results(results: List[RetrievedChunk]) -> str:
    if not results:
        return EMPTY_CONTEXT_MARKER
    blocks = []
    for rc in results:
        meta = rc.result.metadata
        label = meta.get("title") or meta.get("doc_id") or rc.result.vector_id
        header = (
            f"{rc.tag} {label} (doc={meta.get('doc_id', '?')}, "
            f"chunk={meta.get('seq', '?')}, score={rc.result.score:.4f})"
        )
        blocks.append(f"{header}\n{rc.text}")
    return "\n\n".join(blocks)


def retrieve(
    query_text: str,
    k: int,
    index: VectorIndex,
    provider: EmbeddingProvider,
    chunk_texts: Dict[str, str],
    ef_search: int = 64,
) -> ContextBundle:
    """Embed the query and fetch up to k chunks from the index."""
    if not query_text or not query_text.strip():
        raise ValueError("query must be non-empty")
    if index.embedding_provider_id and index.embedding_provider_id != provider.provider_id:
        raise ProviderMismatch(
            f"index built with '{index.embedding_provider_id}', "
            f"query embedded with '{provider.provider_id}'"
        )
    results: List[RetrievedChunk] = []
    if len(index) > 0:
        q = embed_texts(provider, [query_text])[0]
        hits = index.query_ann(q, k, ef_search=max(ef_search, k))
        for rank, hit in enumerate(hits, start=1):
            meta = hit.metadata
            text = chunk_texts.get(meta.get("chunk_id", ""), "")
            results.append(RetrievedChunk(rank=rank, result=hit, text=text))
    return ContextBundle(
        query_text=query_text,
        results=tuple(results),
        serialized=serialize_results(results),
        retrieved_at=datetime.now(timezone.utc).isoformat(),
    )


class SessionStore:
    """In-memory sessions with idle expiry."""

    def __init__(self, memory_budget: int = 4, idle_ttl: float = 3600.0):
        self.memory_budget = memory_budget
        self.idle_ttl = idle_ttl
        self._sessions: Dict[str, ChatSession] = {}

    def create(self, session_id: Optional[str] = None) -> ChatSession:
        sid = session_id or uuid.uuid4().hex
        session = ChatSession(session_id=sid, memory_budget=self.memory_budget)
        self._sessions[sid] = session
        return session

    def get(self, session_id: str) -> ChatSession:
        self._expire()
        session = self._sessions.get(session_id)
        if session is None:
            raise UnknownSession(session_id)
        return session

    def get_or_create(self, session_id: Optional[str]) -> ChatSession:
        if session_id is None:
            return self.create()
        try:
            return self.get(session_id)
        except UnknownSession:
            return self.create(session_id)

    def _expire(self):
        now = time.time()
        stale = [sid for sid, s in self._sessions.items() if now - s.last_used > self.idle_ttl]
        for sid in stale:
            del self._sessions[sid]


def update_session(session: ChatSession, question: str, bundle: ContextBundle, answer: str):
    session.turns.append(Turn(question=question, bundle=bundle, answer=answer, at=time.time()))
    session.last_used = time.time()
