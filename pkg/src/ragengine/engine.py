"""Engine configuration and the end-to-end pipeline (ingest, ask, persist, watch)."""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional

from . import chat as chat_mod
from .corpus import (
    ChunkConfig,
    DEFAULT_EXTRACTORS,
    Document,
    load_document,
    normalize_text,
    split_recursive,
)
from .embedding import HTTPEmbeddingProvider, MockEmbeddingProvider, embed_texts
from .errors import ConfigError, StageError, WatchDirMissing
from .extraction import (
    ExtractionSchema,
    RecordStore,
    export_records,
    extract_metadata,
    import_records_json,
)
from .retrieval import SessionStore, retrieve
from .vindex import VectorIndex, VectorRecord

log = logging.getLogger("ragengine")

ENV_PREFIX = "ENGINE_"
KEY_ALIASES = {
    "MISTRAL_API_KEY": "llm_key",
    "PINECONE_API_KEY": "embedding_key",
}


@dataclass
class EngineConfig:
    embedding_kind: str = "mock"        # mock | http
    embedding_endpoint: str = ""
    embedding_key: str = ""
    llm_kind: str = "echo"              # echo | scripted | stub | http
    llm_endpoint: str = ""
    llm_key: str = ""
    extraction_llm_kind: str = "stub"   # same kinds; stub returns "{}"
    chunk_size: int = 4000
    overlap: int = 200
    k: int = 4
    ef_search: int = 64
    memory_budget: int = 4
    session_idle_ttl: float = 3600.0
    extraction_text_budget: int = 60000
    llm_context_budget: int = 30000
    watch_dir: str = "watch"
    poll_interval: float = 2.0
    data_dir: str = "data"
    host: str = "127.0.0.1"
    port: int = 8000


def parse_dotenv(path: str | Path) -> Dict[str, str]:
    """Minimal KEY=VALUE parser for a .env file (quotes and # comments)."""
    env: Dict[str, str] = {}
    p = Path(path)
    if not p.is_file():
        return env
    for line in p.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, _, value = line.partition("=")
        value = value.strip()
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
        env[key.strip()] = value
    return env


_FIELD_TYPES = {f: t for f, t in EngineConfig.__annotations__.items()}


def load_config(
    cli_overrides: Optional[Dict[str, object]] = None,
    environ: Optional[Dict[str, str]] = None,
    dotenv_path: str | Path = ".env",
) -> EngineConfig:
    """Precedence: CLI flags > environment > .env file > defaults."""
    import os

    merged: Dict[str, object] = {}
    sources = [parse_dotenv(dotenv_path), dict(environ if environ is not None else os.environ)]
    for source in sources:  # later sources win
        for key, value in source.items():
            if key in KEY_ALIASES:
                merged[KEY_ALIASES[key]] = value
                continue
            if not key.startswith(ENV_PREFIX):
                continue
            fname = key[len(ENV_PREFIX) :].lower()
            if fname in _FIELD_TYPES:
                merged[fname] = value
    for key, value in (cli_overrides or {}).items():
        if value is not None:
            merged[key] = value

    cfg = EngineConfig()
    for fname, value in merged.items():
        ftype = _FIELD_TYPES.get(fname)
        if ftype is None:
            continue
        try:
            if ftype == "int":
                value = int(value)
            elif ftype == "float":
                value = float(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {fname}: {value!r}") from exc
        setattr(cfg, fname, value)
    if not (0 <= cfg.overlap < cfg.chunk_size):
        raise ConfigError("overlap must satisfy 0 <= overlap < chunk_size")
    return cfg


def _make_embedder(cfg: EngineConfig):
    if cfg.embedding_kind == "mock":
        return MockEmbeddingProvider()
    if cfg.embedding_kind == "http":
        if not cfg.embedding_endpoint:
            raise ConfigError("embedding_kind=http requires embedding_endpoint")
        return HTTPEmbeddingProvider(cfg.embedding_endpoint, api_key=cfg.embedding_key)
    raise ConfigError(f"unknown embedding_kind '{cfg.embedding_kind}'")


def _make_llm(kind: str, cfg: EngineConfig):
    if kind == "echo":
        return chat_mod.EchoProvider(context_budget=cfg.llm_context_budget)
    if kind == "stub":
        return chat_mod.StubExtractionProvider()
    if kind == "scripted":
        return chat_mod.ScriptedProvider(["I don't know."], context_budget=cfg.llm_context_budget)
    if kind == "http":
        if not cfg.llm_endpoint:
            raise ConfigError("llm_kind=http requires llm_endpoint")
        return chat_mod.HTTPLLMProvider(cfg.llm_endpoint, api_key=cfg.llm_key,
                                        context_budget=cfg.llm_context_budget)
    raise ConfigError(f"unknown llm kind '{kind}'")


@dataclass
class IngestReport:
    doc_id: str
    source_path: str
    chunks: int
    vectors: int
    record_id: Optional[str]
    extraction_error: Optional[str]
    skipped: bool
    elapsed: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "source_path": self.source_path,
            "chunks": self.chunks,
            "vectors": self.vectors,
            "record_id": self.record_id,
            "extraction_error": self.extraction_error,
            "skipped": self.skipped,
            "elapsed": self.elapsed,
        }


class Engine:
    """Owns the pipeline state and wires the modules together."""

    def __init__(self, config: Optional[EngineConfig] = None,
                 embedder=None, llm=None, extraction_llm=None):
        self.config = config or EngineConfig()
        self.embedder = embedder or _make_embedder(self.config)
        self.llm = llm or _make_llm(self.config.llm_kind, self.config)
        self.extraction_llm = extraction_llm or _make_llm(
            self.config.extraction_llm_kind, self.config
        )
        self.schema = ExtractionSchema()
        self.index = VectorIndex()
        self.index.embedding_provider_id = self.embedder.provider_id
        self.records = RecordStore()
        self.sessions = SessionStore(
            memory_budget=self.config.memory_budget,
            idle_ttl=self.config.session_idle_ttl,
        )
        self.chunk_texts: Dict[str, str] = {}
        self.documents: Dict[str, dict] = {}
        self.ingested_hashes: Dict[str, str] = {}  # content_hash -> doc_id
        self.extractors = dict(DEFAULT_EXTRACTORS)
        self.chunk_config = ChunkConfig(
            chunk_size=self.config.chunk_size, overlap=self.config.overlap
        )
        self._write_lock = threading.RLock()

    # -- ingestion ----------------------------------------------------------

    def ingest_document(self, path: str | Path) -> IngestReport:
        """load -> normalize -> split -> embed -> upsert -> extract, atomically."""
        elapsed: Dict[str, float] = {}

        def timed(stage, fn, *args, **kwargs):
            t0 = time.perf_counter()
            try:
                out = fn(*args, **kwargs)
            except StageError:
                raise
            except Exception as exc:
                raise StageError(stage, exc) from exc
            elapsed[stage] = time.perf_counter() - t0
            return out

        doc: Document = timed("load", load_document, path, self.extractors)
        if doc.content_hash in self.ingested_hashes:
            return IngestReport(
                doc_id=self.ingested_hashes[doc.content_hash],
                source_path=str(path), chunks=0, vectors=0,
                record_id=None, extraction_error=None,
                skipped=True, elapsed=elapsed,
            )
        text = timed("normalize", normalize_text, doc.raw_text)
        chunks = timed("split", split_recursive, text, self.chunk_config, doc.doc_id)
        vectors = timed("embed", embed_texts, self.embedder, [c.text for c in chunks])

        vrecords = []
        for c, v in zip(chunks, vectors):
            meta = {
                "doc_id": doc.doc_id,
                "seq": str(c.seq),
                "span": f"{c.span[0]}:{c.span[1]}",
                "chunk_id": c.chunk_id,
            }
            for bk in ("title", "doi"):
                if bk in doc.biblio:
                    meta[bk] = doc.biblio[bk]
            vrecords.append(
                VectorRecord(
                    vector_id=c.chunk_id, embedding=v,
                    chunk_id=c.chunk_id, doc_id=doc.doc_id, metadata=meta,
                )
            )

        with self._write_lock:
            timed("upsert", self.index.upsert, vrecords)
            record_id = None
            extraction_error = None
            try:
                record = timed(
                    "extract", extract_metadata,
                    doc, self.extraction_llm, self.schema, self.records,
                    text_budget=self.config.extraction_text_budget,
                )
                record_id = record.record_id
            except Exception:
                # All-or-nothing: roll the vectors back before propagating.
                self.index.delete([r.vector_id for r in vrecords])
                raise

            for c in chunks:
                self.chunk_texts[c.chunk_id] = c.text
            self.documents[doc.doc_id] = {
                "doc_id": doc.doc_id,
                "source_path": doc.source_path,
                "ingested_at": doc.ingested_at,
                "content_hash": doc.content_hash,
                "chunks": len(chunks),
                "biblio": doc.biblio,
            }
            self.ingested_hashes[doc.content_hash] = doc.doc_id

        return IngestReport(
            doc_id=doc.doc_id, source_path=str(path),
            chunks=len(chunks), vectors=len(vrecords),
            record_id=record_id, extraction_error=extraction_error,
            skipped=False, elapsed=elapsed,
        )

    # -- chat ---------------------------------------------------------------

    def ask(self, question: str, session_id: Optional[str] = None):
        session = self.sessions.get_or_create(session_id)
        ans = chat_mod.answer(
            question, session, self.index, self.embedder, self.llm,
            self.chunk_texts, k=self.config.k, ef_search=self.config.ef_search,
        )
        return session.session_id, ans

    def retrieve(self, question: str):
        return retrieve(question, self.config.k, self.index, self.embedder,
                        self.chunk_texts, ef_search=self.config.ef_search)

    # -- persistence --------------------------------------------------------

    def _data_path(self, name: str) -> Path:
        d = Path(self.config.data_dir)
        d.mkdir(parents=True, exist_ok=True)
        return d / name

    def save_state(self):
        with self._write_lock:
            self.index.save_snapshot(self._data_path("index.snap"))
            export_records(self.records, self.schema, "json", self._data_path("records.json"))
            state = {
                "chunk_texts": self.chunk_texts,
                "documents": self.documents,
                "ingested_hashes": self.ingested_hashes,
            }
            self._data_path("state.json").write_text(
                json.dumps(state, ensure_ascii=False), encoding="utf-8"
            )

    def load_state(self):
        snap = self._data_path("index.snap")
        if snap.is_file():
            self.index = VectorIndex.load_snapshot(snap)
            if self.index.embedding_provider_id is None:
                self.index.embedding_provider_id = self.embedder.provider_id
        records = self._data_path("records.json")
        if records.is_file():
            import_records_json(records.read_text(encoding="utf-8"), self.records)
        state_path = self._data_path("state.json")
        if state_path.is_file():
            state = json.loads(state_path.read_text(encoding="utf-8"))
            self.chunk_texts = state.get("chunk_texts", {})
            self.documents = state.get("documents", {})
            self.ingested_hashes = state.get("ingested_hashes", {})


class Watcher:
    """Polls a directory and ingests new supported files once each."""

    def __init__(self, engine: Engine, watch_dir: Optional[str | Path] = None,
                 poll_interval: Optional[float] = None, max_retries: int = 2):
        self.engine = engine
        self.watch_dir = Path(watch_dir or engine.config.watch_dir)
        self.poll_interval = poll_interval if poll_interval is not None else engine.config.poll_interval
        self.max_retries = max_retries
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self._failures: Dict[str, int] = {}
        self._seen: set = set()  # (name, content_hash) ledger

    def _ledger_path(self) -> Path:
        return self.engine._data_path("watch_ledger.json")

    def _load_ledger(self):
        p = self._ledger_path()
        if p.is_file():
            self._seen = {tuple(item) for item in json.loads(p.read_text(encoding="utf-8"))}

    def _save_ledger(self):
        self._ledger_path().write_text(
            json.dumps(sorted(list(t) for t in self._seen)), encoding="utf-8"
        )

    def scan_once(self) -> List[IngestReport]:
        from .corpus import content_hash as hash_text

        reports = []
        for p in sorted(self.watch_dir.iterdir()):
            if not p.is_file():
                continue
            if p.suffix.lower() not in self.engine.extractors:
                log.info("watch: ignoring unsupported file %s", p.name)
                continue
            try:
                digest = hash_text(p.read_text(encoding="utf-8", errors="replace"))
            except OSError as exc:
                log.warning("watch: cannot read %s: %s", p, exc)
                continue
            key = (p.name, digest)
            if key in self._seen or self._failures.get(str(p), 0) > self.max_retries:
                continue
            try:
                report = self.engine.ingest_document(p)
            except Exception as exc:
                self._failures[str(p)] = self._failures.get(str(p), 0) + 1
                log.warning("watch: ingest of %s failed (%s)", p, exc)
                continue
            self._seen.add(key)
            self._save_ledger()
            reports.append(report)
        return reports

    def start(self):
        if not self.watch_dir.is_dir():
            raise WatchDirMissing(str(self.watch_dir))
        self._load_ledger()
        self._stop.clear()
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def _run(self):
        while not self._stop.is_set():
            try:
                self.scan_once()
            except Exception:
                log.exception("watch loop scan failed")
            self._stop.wait(self.poll_interval)

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=10)
            self._thread = None
