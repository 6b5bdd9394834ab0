"""Document loading, text normalization and recursive chunking."""

from __future__ import annotations

import hashlib
import re
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from .errors import EmptyDocument, UnsupportedFormat

DEFAULT_SEPARATORS = ["\n\n", "\n", ". ", " "]


@dataclass(frozen=True)
class Document:
    doc_id: str
    source_path: str
    raw_text: str
    biblio: Dict[str, str]
    ingested_at: str
    content_hash: str


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    seq: int
    span: Tuple[int, int]
    text: str


@dataclass(frozen=True)
class ChunkConfig:
    chunk_size: int = 4000
    overlap: int = 200
    separators: Tuple[str, ...] = tuple(DEFAULT_SEPARATORS)

    def __post_init__(self):
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        if not (0 <= self.overlap < self.chunk_size):
            raise ValueError("overlap must satisfy 0 <= overlap < chunk_size")


# An extractor returns (raw_text, biblio) for a file path.
Extractor = Callable[[Path], Tuple[str, Dict[str, str]]]


def _read_plain(path: Path) -> Tuple[str, Dict[str, str]]:
    return path.read_text(encoding="utf-8", errors="replace"), {}


DEFAULT_EXTRACTORS: Dict[str, Extractor] = {
    ".txt": _read_plain,
    ".md": _read_plain,
}


def content_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def load_document(
    path: str | Path,
    extractors: Optional[Dict[str, Extractor]] = None,
) -> Document:
    """Load a file through the extractor registered for its extension."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(str(p))
    registry = extractors if extractors is not None else DEFAULT_EXTRACTORS
    ext = p.suffix.lower()
    extractor = registry.get(ext)
    if extractor is None:
        raise UnsupportedFormat(f"no extractor registered for '{ext}'")
    raw_text, biblio = extractor(p)
    if not raw_text or not raw_text.strip():
        raise EmptyDocument(f"extraction of {p} yielded only whitespace")
    return Document(
        doc_id=uuid.uuid4().hex,
        source_path=str(p),
        raw_text=raw_text,
        biblio=dict(biblio),
        ingested_at=datetime.now(timezone.utc).isoformat(),
        content_hash=content_hash(raw_text),
    )


_CONTROL_RE = re.compile(r"[\x00-\x08\x0b\x0c\x0e-\x1f\x7f]")
_BLANK_RUN_RE = re.compile(r"\n{3,}")


def normalize_text(raw: str) -> str:
    """Canonicalize line endings, strip control chars, rstrip lines, collapse blank runs.

    Total and idempotent; Unicode content is otherwise preserved.
    """
    t = raw.replace("\r\n", "\n").replace("\r", "\n")
    t = _CONTROL_RE.sub("", t)
    t = "\n".join(line.rstrip() for line in t.split("\n"))
    t = _BLANK_RUN_RE.sub("\n\n", t)
    return t


def _split_keep_separator(text: str, sep: str) -> List[Tuple[int, int]]:
    """Split into spans where each piece keeps its trailing separator."""
    spans = []
    start = 0
    i = text.find(sep)
    while i != -1:
        end = i + len(sep)
        spans.append((start, end))
        start = end
        i = text.find(sep, start)
    if start < len(text):
        spans.append((start, len(text)))
    return spans


def _window_spans(start: int, end: int, size: int, overlap: int) -> List[Tuple[int, int]]:
    """Fixed sliding window fallback: width `size`, stride `size - overlap`."""
    stride = size - overlap
    spans = []
    pos = start
    while True:
        stop = min(pos + size, end)
        spans.append((pos, stop))
        if stop >= end:
            break
        pos += stride
    return spans


def _split_span(
    text: str, start: int, end: int, separators: Tuple[str, ...], size: int, overlap: int
) -> List[Tuple[int, int]]:
    if end - start <= size:
        return [(start, end)]
    if not separators:
        return _window_spans(start, end, size, overlap)
    sep, rest = separators[0], separators[1:]
    pieces = _split_keep_separator(text[start:end], sep)
    if len(pieces) <= 1:
        return _split_span(text, start, end, rest, size, overlap)

    out: List[Tuple[int, int]] = []
    acc_start: Optional[int] = None
    acc_end = 0

    def flush():
        nonlocal acc_start
        if acc_start is not None:
            out.append((acc_start, acc_end))
            acc_start = None

    for ps, pe in pieces:
        ps, pe = start + ps, start + pe
        if pe - ps > size:
            # Piece alone exceeds the budget: recurse at the next finer level.
            flush()
            out.extend(_split_span(text, ps, pe, rest, size, overlap))
            continue
        if acc_start is None:
            acc_start, acc_end = ps, pe
        elif pe - acc_start <= size:
            acc_end = pe
        else:
            flush()
            acc_start, acc_end = ps, pe
    flush()
    return out


def split_recursive(text: str, config: ChunkConfig, doc_id: str = "") -> List[Chunk]:
    """Split normalized text into ordered chunks covering every character.

    Separator levels are tried coarsest-first with greedy accumulation; a
    piece that alone exceeds chunk_size recurses to the next finer level, and
    the finest level falls back to a fixed sliding window with overlap.
    """
    if not text:
        return []
    spans = _split_span(text, 0, len(text), tuple(config.separators), config.chunk_size, config.overlap)
    chunks = []
    for seq, (s, e) in enumerate(spans):
        chunks.append(
            Chunk(
                chunk_id=f"{doc_id or 'doc'}:{seq}",
                doc_id=doc_id,
                seq=seq,
                span=(s, e),
                text=text[s:e],
            )
        )
    return chunks
