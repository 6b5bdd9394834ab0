"""Self-contained retrieval-augmented generation engine.

Pipeline: document ingestion and chunking -> schema-driven metadata
extraction -> 384-d embeddings -> embedded HNSW vector index -> grounded
chat with source citations. CLI and HTTP gateways live in `cli` and
`server`.
"""

from .corpus import Chunk, ChunkConfig, Document, load_document, normalize_text, split_recursive
from .embedding import MockEmbeddingProvider, embed_texts, unit_normalize
from .engine import Engine, EngineConfig, IngestReport, Watcher, load_config
from .extraction import ExtractionRecord, ExtractionSchema, RecordStore
from .vindex import QueryResult, VectorIndex, VectorRecord

__version__ = "0.1.0"

__all__ = [
    "Chunk",
    "ChunkConfig",
    "Document",
    "Engine",
    "EngineConfig",
    "ExtractionRecord",
    "ExtractionSchema",
    "IngestReport",
    "MockEmbeddingProvider",
    "QueryResult",
    "RecordStore",
    "VectorIndex",
    "VectorRecord",
    "Watcher",
    "embed_texts",
    "load_config",
    "load_document",
    "normalize_text",
    "split_recursive",
    "unit_normalize",
]
