"""Embedded vector index: exact cosine search plus an incremental HNSW graph.

Vectors are unit-norm 384-d; cosine similarity therefore equals the dot
product. The HNSW graph supports incremental insertion; deletions are
tombstones compacted on snapshot save. Snapshots persist records only and
rebuild the graph deterministically on load (declared in the header).
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .embedding import DIM
from .errors import CorruptSnapshot, DimensionMismatch, InvariantViolation, VersionMismatch
from .kernels import KernelBackend, get_backend

SNAPSHOT_MAGIC = b"RAGVIDX\x01"
SNAPSHOT_VERSION = 1
NORM_TOLERANCE = 1e-4


@dataclass(frozen=True)
class VectorRecord:
    vector_id: str
    embedding: np.ndarray
    chunk_id: str
    doc_id: str
    metadata: Dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class QueryResult:
    vector_id: str
    score: float
    metadata: Dict[str, str]


class VectorIndex:
    """HNSW-backed cosine index with an exact brute-force path."""

    def __init__(
        self,
        m: int = 16,
        ef_construction: int = 200,
        seed: int = 42,
        beam_factor: int = 8,
        backend: Optional[KernelBackend] = None,
    ):
        self.m = m
        self.m0 = 2 * m
        self.ef_construction = ef_construction
        self.seed = seed
        # High-dimensional random vectors concentrate in distance, which makes
        # the canonical stop rule give up too early; ef_search maps to an
        # internal candidate-list width of beam_factor * ef_search.
        self.beam_factor = beam_factor
        self.ml = 1.0 / math.log(m)
        self.backend = backend or get_backend()
        self.embedding_provider_id: Optional[str] = None
        self._lock = threading.RLock()
        self._reset_storage()

    def _reset_storage(self):
        self._capacity = 1024
        self._vectors = np.zeros((self._capacity, DIM), dtype=np.float64)
        # float32 twin fed to the search kernels (SIMD-friendly); float64
        # copy above is the authority for returned scores
        self._vectors32 = np.zeros((self._capacity, DIM), dtype=np.float32)
        self._count = 0
        self._alive = np.zeros(self._capacity, dtype=np.uint8)
        self._all_alive = np.ones(self._capacity, dtype=np.uint8)
        self._levels: List[int] = []
        # per layer: (adjacency int64 (cap, max_conn+1), counts int64 (cap,))
        self._adj: List[np.ndarray] = []
        self._cnt: List[np.ndarray] = []
        self._entry = -1
        self._max_level = -1
        self._id_to_node: Dict[str, int] = {}
        self._node_meta: List[Optional[dict]] = []  # None for tombstoned slots
        self._rng = np.random.Generator(np.random.PCG64(self.seed))

    # -- storage helpers ----------------------------------------------------

    def __len__(self) -> int:
        return len(self._id_to_node)

    def _grow(self, needed: int):
        if needed <= self._capacity:
            return
        new_cap = max(self._capacity * 2, needed)
        vec = np.zeros((new_cap, DIM), dtype=np.float64)
        vec[: self._count] = self._vectors[: self._count]
        self._vectors = vec
        vec32 = np.zeros((new_cap, DIM), dtype=np.float32)
        vec32[: self._count] = self._vectors32[: self._count]
        self._vectors32 = vec32
        for arrs in ("_alive", "_all_alive"):
            old = getattr(self, arrs)
            new = np.ones(new_cap, dtype=np.uint8) if arrs == "_all_alive" else np.zeros(new_cap, dtype=np.uint8)
            new[: self._count] = old[: self._count]
            setattr(self, arrs, new)
        for li in range(len(self._adj)):
            width = self._adj[li].shape[1]
            adj = np.zeros((new_cap, width), dtype=np.int64)
            adj[: self._count] = self._adj[li][: self._count]
            self._adj[li] = adj
            cnt = np.zeros(new_cap, dtype=np.int64)
            cnt[: self._count] = self._cnt[li][: self._count]
            self._cnt[li] = cnt
        self._capacity = new_cap

    def _ensure_layer(self, level: int):
        while len(self._adj) <= level:
            width = (self.m0 if len(self._adj) == 0 else self.m) + 1
            self._adj.append(np.zeros((self._capacity, width), dtype=np.int64))
            self._cnt.append(np.zeros(self._capacity, dtype=np.int64))

    # -- construction -------------------------------------------------------

    def upsert(self, records: Sequence[VectorRecord]) -> Tuple[int, int]:
        """Insert new records, replace existing vector_ids. Returns (inserted, updated)."""
        with self._lock:
            inserted = updated = 0
            for rec in records:
                vec = np.asarray(rec.embedding, dtype=np.float64)
                if vec.shape != (DIM,):
                    raise DimensionMismatch(f"record {rec.vector_id}: shape {vec.shape}")
                norm = float(np.linalg.norm(vec))
                if abs(norm - 1.0) > NORM_TOLERANCE:
                    raise InvariantViolation(
                        f"record {rec.vector_id}: vector norm {norm:.6f} is not 1"
                    )
                old = self._id_to_node.get(rec.vector_id)
                if old is not None:
                    self._tombstone(old)
                    updated += 1
                else:
                    inserted += 1
                self._insert_node(rec, vec)
            return inserted, updated

    def delete(self, vector_ids: Sequence[str]) -> int:
        with self._lock:
            removed = 0
            for vid in vector_ids:
                node = self._id_to_node.pop(vid, None)
                if node is not None:
                    self._tombstone(node, drop_id=False)
                    removed += 1
            return removed

    def delete_doc(self, doc_id: str) -> int:
        ids = [vid for vid, n in self._id_to_node.items()
               if self._node_meta[n] and self._node_meta[n]["doc_id"] == doc_id]
        return self.delete(ids)

    def _tombstone(self, node: int, drop_id: bool = True):
        meta = self._node_meta[node]
        if meta is not None and drop_id:
            self._id_to_node.pop(meta["vector_id"], None)
        self._node_meta[node] = None
        self._alive[node] = 0

    def _random_level(self) -> int:
        u = self._rng.random()
        while u <= 0.0:
            u = self._rng.random()
        return int(-math.log(u) * self.ml)

    def _insert_node(self, rec: VectorRecord, vec: np.ndarray):
        node = self._count
        self._grow(node + 1)
        level = self._random_level()
        self._ensure_layer(level)
        self._vectors[node] = vec
        self._vectors32[node] = vec
        self._alive[node] = 1
        self._count += 1
        self._levels.append(level)
        self._node_meta.append(
            {
                "vector_id": rec.vector_id,
                "chunk_id": rec.chunk_id,
                "doc_id": rec.doc_id,
                "metadata": dict(rec.metadata),
            }
        )
        self._id_to_node[rec.vector_id] = node

        if self._entry < 0:
            self._entry = node
            self._max_level = level
            return

        search = self.backend.search_layer
        select = self.backend.select_neighbors
        vectors = self._vectors32[: self._count]
        vec32 = self._vectors32[node]
        routing = self._all_alive[: self._count]
        ep = np.array([self._entry], dtype=np.int64)

        for lc in range(self._max_level, level, -1):
            ids, _ = search(vectors, self._adj[lc][: self._count], self._cnt[lc][: self._count],
                            routing, vec32, ep, 1)
            if ids.size:
                ep = ids[:1]

        for lc in range(min(level, self._max_level), -1, -1):
            ids, dists = search(vectors, self._adj[lc][: self._count], self._cnt[lc][: self._count],
                                routing, vec32, ep, self.ef_construction)
            max_conn = self.m0 if lc == 0 else self.m
            # new node links to at most max_conn selected neighbors; reverse
            # links may overflow by one before pruning
            neighbors = select(vectors, ids, np.asarray(dists, dtype=np.float64), max_conn, True)
            adj, cnt = self._adj[lc], self._cnt[lc]
            adj[node, : neighbors.size] = neighbors
            cnt[node] = neighbors.size
            for nb in neighbors:
                nb = int(nb)
                adj[nb, cnt[nb]] = node
                cnt[nb] += 1
                if cnt[nb] > max_conn:
                    nbr_ids = adj[nb, : cnt[nb]].copy()
                    nbr_d = (1.0 - vectors[nbr_ids] @ vectors[nb]).astype(np.float64)
                    kept = select(vectors, nbr_ids, nbr_d, max_conn, False)
                    adj[nb, : kept.size] = kept
                    cnt[nb] = kept.size
            if ids.size:
                ep = ids

        if level > self._max_level:
            self._entry = node
            self._max_level = level

    # -- queries ------------------------------------------------------------

    @staticmethod
    def _check_query(q: np.ndarray, k: int) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (DIM,):
            raise DimensionMismatch(f"query shape {q.shape}")
        if k < 1:
            raise ValueError("k must be >= 1")
        return q

    def _result(self, node: int, score: float) -> QueryResult:
        meta = self._node_meta[node]
        return QueryResult(vector_id=meta["vector_id"], score=float(score),
                           metadata=dict(meta["metadata"]))

    def _rank(self, nodes: np.ndarray, scores: np.ndarray, k: int) -> List[QueryResult]:
        pairs = sorted(
            zip(nodes.tolist(), scores.tolist()),
            key=lambda p: (-p[1], self._node_meta[p[0]]["vector_id"]),
        )
        return [self._result(n, s) for n, s in pairs[:k]]

    def query_exact(self, q: np.ndarray, k: int, metadata_filter: Optional[Dict[str, str]] = None
                    ) -> List[QueryResult]:
        """Brute-force top-k by dot product over all live records."""
        q = self._check_query(q, k)
        with self._lock:
            if not self._id_to_node:
                return []
            nodes = np.fromiter(self._id_to_node.values(), dtype=np.int64)
            if metadata_filter:
                nodes = np.array(
                    [n for n in nodes if self._matches(n, metadata_filter)], dtype=np.int64
                )
                if nodes.size == 0:
                    return []
            scores = self._vectors[nodes] @ q
            return self._rank(nodes, scores, k)

    def _matches(self, node: int, flt: Dict[str, str]) -> bool:
        meta = self._node_meta[node]["metadata"]
        return all(meta.get(key) == val for key, val in flt.items())

    def query_ann(self, q: np.ndarray, k: int, ef_search: int = 64) -> List[QueryResult]:
        """HNSW top-k; recall measured against query_exact."""
        q = self._check_query(q, k)
        if ef_search < k:
            raise ValueError("ef_search must be >= k")
        with self._lock:
            if not self._id_to_node:
                return []
            search = self.backend.search_layer
            vectors = self._vectors32[: self._count]
            q32 = q.astype(np.float32)
            routing = self._all_alive[: self._count]
            ep = np.array([self._entry], dtype=np.int64)
            for lc in range(self._max_level, 0, -1):
                ids, _ = search(vectors, self._adj[lc][: self._count],
                                self._cnt[lc][: self._count], routing, q32, ep, 1)
                if ids.size:
                    ep = ids[:1]
            ids, _ = search(vectors, self._adj[0][: self._count], self._cnt[0][: self._count],
                            self._alive[: self._count], q32, ep,
                            ef_search * self.beam_factor)
            if ids.size == 0:
                return []
            scores = self._vectors[ids] @ q
            return self._rank(ids, scores, k)

    # -- persistence --------------------------------------------------------

    def live_records(self) -> List[dict]:
        out = []
        for vid, node in sorted(self._id_to_node.items()):
            meta = self._node_meta[node]
            out.append(
                {
                    "vector_id": vid,
                    "chunk_id": meta["chunk_id"],
                    "doc_id": meta["doc_id"],
                    "metadata": meta["metadata"],
                    "_node": node,
                }
            )
        return out

    def save_snapshot(self, dest: str | Path) -> int:
        """Write records + parameters; the graph is rebuilt on load."""
        with self._lock:
            records = self.live_records()
            nodes = [r.pop("_node") for r in records]
            vec_block = np.ascontiguousarray(
                self._vectors[nodes], dtype=np.float32
            ).tobytes() if nodes else b""
            meta_block = json.dumps(records, ensure_ascii=False).encode("utf-8")
            header = {
                "format_version": SNAPSHOT_VERSION,
                "count": len(records),
                "dim": DIM,
                "m": self.m,
                "ef_construction": self.ef_construction,
                "seed": self.seed,
                "beam_factor": self.beam_factor,
                "graph": "rebuilt",
                "provider_id": self.embedding_provider_id,
                "meta_len": len(meta_block),
                "vec_len": len(vec_block),
            }
            header_block = json.dumps(header).encode("utf-8")
            body = (
                SNAPSHOT_MAGIC
                + struct.pack("<II", SNAPSHOT_VERSION, len(header_block))
                + header_block
                + meta_block
                + vec_block
            )
            digest = hashlib.sha256(body).digest()
            Path(dest).write_bytes(body + digest)
            return len(body) + len(digest)

    @classmethod
    def load_snapshot(cls, src: str | Path, backend: Optional[KernelBackend] = None) -> "VectorIndex":
        data = Path(src).read_bytes()
        if len(data) < len(SNAPSHOT_MAGIC) + 8 + 32:
            raise CorruptSnapshot("snapshot too short")
        if not data.startswith(SNAPSHOT_MAGIC):
            raise CorruptSnapshot("bad magic bytes")
        body, digest = data[:-32], data[-32:]
        if hashlib.sha256(body).digest() != digest:
            raise CorruptSnapshot("checksum mismatch")
        off = len(SNAPSHOT_MAGIC)
        version, header_len = struct.unpack_from("<II", body, off)
        if version != SNAPSHOT_VERSION:
            raise VersionMismatch(f"snapshot version {version}")
        off += 8
        header = json.loads(body[off : off + header_len])
        off += header_len
        meta_block = body[off : off + header["meta_len"]]
        off += header["meta_len"]
        vec_block = body[off : off + header["vec_len"]]
        if len(vec_block) != header["vec_len"]:
            raise CorruptSnapshot("truncated vector block")
        records_meta = json.loads(meta_block)
        vectors = np.frombuffer(vec_block, dtype=np.float32).reshape(
            header["count"], header["dim"]
        ).astype(np.float64)
        # float32 round-trip can nudge norms off 1; renormalize exactly once
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
        vectors = np.divide(vectors, norms, where=norms > 0)

        index = cls(m=header["m"], ef_construction=header["ef_construction"],
                    seed=header["seed"], beam_factor=header.get("beam_factor", 8),
                    backend=backend)
        index.embedding_provider_id = header.get("provider_id")
        recs = [
            VectorRecord(
                vector_id=rm["vector_id"],
                embedding=vec,
                chunk_id=rm["chunk_id"],
                doc_id=rm["doc_id"],
                metadata=rm["metadata"],
            )
            for rm, vec in zip(records_meta, vectors)
        ]
        index.upsert(recs)
        return index
