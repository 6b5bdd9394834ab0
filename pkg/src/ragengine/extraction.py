"""Schema-driven metadata extraction: prompt building, response validation,
record storage and JSON/CSV export."""

from __future__ import annotations

import csv
import io
import json
import re
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .corpus import Document
from .errors import EmptyDocument, MalformedJson, NotAnObject

SENTINEL = "N/A"

DEFAULT_CATEGORIES: List[Tuple[str, List[Tuple[str, str]]]] = [
    (
        "bibliographic",
        [
            ("title", "Full title of the paper"),
            ("authors", "Author names, separated by '; '"),
            ("doi", "Digital Object Identifier"),
            ("journal", "Journal name"),
            ("keywords", "Author-listed keywords"),
            ("publication_date", "Date of publication"),
            ("impact_factor", "Journal impact factor, only if stated in the text"),
        ],
    ),
    (
        "plant_material",
        [
            ("crop_type", "Crop species or variety studied"),
            ("developmental_stage", "Plant developmental stage at inoculation"),
            ("inoculation_method", "How the inoculum was applied"),
            ("spore_density", "Spore density of the inoculum"),
            ("inoculum_formulation", "Formulation of the inoculum"),
        ],
    ),
    (
        "experimental_conditions",
        [
            ("location", "Geographic location of the experiment"),
            ("altitude", "Altitude of the site"),
            ("soil_ph", "Soil pH"),
            ("climatic_regime", "Climatic regime or classification"),
            ("irrigation_protocol", "Irrigation protocol"),
            ("fertilization_protocol", "Fertilization protocol"),
            ("stress_factors", "Abiotic or biotic stress factors applied"),
        ],
    ),
    (
        "outcomes",
        [
            ("shoot_biomass", "Shoot biomass outcome"),
            ("root_biomass", "Root biomass outcome"),
            ("leaf_area", "Leaf area outcome"),
            ("flowering_time", "Flowering time"),
            ("harvest_time", "Harvest time"),
            ("colonization_percentage", "Root colonization percentage"),
            ("disease_index", "Disease index or severity"),
        ],
    ),
]

PROMPT_RULES = (
    "Extract the following fields from the scientific paper and return them as a JSON object:\n"
    '- Extract only explicitly mentioned data; if missing, return "N/A".\n'
    "- Do not infer values.\n"
    "- Ensure valid JSON formatting.\n"
)
RETRY_REMINDER = (
    "\n\nReminder: your previous reply was not valid JSON. "
    "Ensure valid JSON formatting: return a single JSON object and nothing else."
)
TRUNCATION_NOTICE = "\n[document truncated]"


@dataclass(frozen=True)
class ExtractionSchema:
    categories: Tuple[Tuple[str, Tuple[Tuple[str, str], ...]], ...] = tuple(
        (name, tuple(fields)) for name, fields in DEFAULT_CATEGORIES
    )

    def __post_init__(self):
        keys = self.field_keys()
        if len(keys) != len(set(keys)):
            raise ValueError("field keys must be unique across the schema")

    def field_keys(self) -> List[str]:
        return [key for _, fields in self.categories for key, _ in fields]

    def descriptors(self) -> List[Tuple[str, str, str]]:
        return [
            (cat, key, desc) for cat, fields in self.categories for key, desc in fields
        ]

    @classmethod
    def from_json_file(cls, path: str | Path) -> "ExtractionSchema":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        cats = tuple(
            (c["name"], tuple((f["key"], f.get("description", "")) for f in c["fields"]))
            for c in data["categories"]
        )
        return cls(categories=cats)


@dataclass(frozen=True)
class ExtractionRecord:
    record_id: str
    doc_id: str
    values: Dict[str, str]
    extracted_at: str
    provider_id: str


def build_extraction_prompt(
    document_text: str, schema: ExtractionSchema, text_budget: int = 60000
) -> str:
    if not document_text or not document_text.strip():
        raise EmptyDocument("document text is empty")
    lines = [PROMPT_RULES, "Fields:"]
    for cat, key, desc in schema.descriptors():
        lines.append(f"- {key} ({cat}): {desc}")
    body = document_text
    if len(body) > text_budget:
        body = body[:text_budget] + TRUNCATION_NOTICE
    lines.append("\nPaper text:\n" + body)
    return "\n".join(lines)


_FENCE_RE = re.compile(r"\A\s*```[a-zA-Z0-9_-]*\s*\n(.*?)\n?\s*```\s*\Z", re.DOTALL)
_KEY_NORM_RE = re.compile(r"[\s\-]+")


def _normalize_key(key: str) -> str:
    return _KEY_NORM_RE.sub("_", key.strip().lower())


def _stringify(value) -> str:
    if value is None:
        return SENTINEL
    if isinstance(value, str):
        return value.strip() or SENTINEL
    if isinstance(value, list):
        return "; ".join(_stringify(v) for v in value) or SENTINEL
    return json.dumps(value, ensure_ascii=False)


def parse_extraction_response(
    raw: str, schema: ExtractionSchema
) -> Tuple[Dict[str, str], Dict[str, int]]:
    """Validate an LLM reply into a complete field map plus warning counts."""
    text = raw
    m = _FENCE_RE.match(text)
    if m:
        text = m.group(1)
    try:
        payload = json.loads(text)
    except (json.JSONDecodeError, ValueError) as exc:
        raise MalformedJson(str(exc)) from exc
    if not isinstance(payload, dict):
        raise NotAnObject(f"top-level JSON is {type(payload).__name__}, not an object")

    canonical = {_normalize_key(k): k for k in schema.field_keys()}
    values: Dict[str, str] = {}
    warnings = {"missing": 0, "unknown": 0}
    for raw_key, raw_value in payload.items():
        key = canonical.get(_normalize_key(str(raw_key)))
        if key is None:
            warnings["unknown"] += 1
            continue
        values[key] = _stringify(raw_value)
    for key in schema.field_keys():
        if key not in values:
            values[key] = SENTINEL
            warnings["missing"] += 1
    # preserve schema ordering
    ordered = {key: values[key] for key in schema.field_keys()}
    return ordered, warnings


class RecordStore:
    """Append-only store of extraction records, one per document by default."""

    def __init__(self):
        self._records: Dict[str, ExtractionRecord] = {}
        self._by_doc: Dict[str, str] = {}

    def __len__(self) -> int:
        return len(self._records)

    def add(self, record: ExtractionRecord):
        self._records[record.record_id] = record
        self._by_doc[record.doc_id] = record.record_id

    def get(self, record_id: str) -> Optional[ExtractionRecord]:
        return self._records.get(record_id)

    def for_doc(self, doc_id: str) -> Optional[ExtractionRecord]:
        rid = self._by_doc.get(doc_id)
        return self._records.get(rid) if rid else None

    def all(self) -> List[ExtractionRecord]:
        return list(self._records.values())


def extract_metadata(
    doc: Document,
    llm,
    schema: ExtractionSchema,
    store: RecordStore,
    text_budget: int = 60000,
    force: bool = False,
) -> ExtractionRecord:
    """Prompt -> completion -> validation -> persist. Idempotent per document."""
    if not force:
        existing = store.for_doc(doc.doc_id)
        if existing is not None:
            return existing
    prompt = build_extraction_prompt(doc.raw_text, schema, text_budget=text_budget)
    reply = llm.complete(prompt)
    try:
        values, _ = parse_extraction_response(reply, schema)
    except (MalformedJson, NotAnObject):
        reply = llm.complete(prompt + RETRY_REMINDER)
        values, _ = parse_extraction_response(reply, schema)
    record = ExtractionRecord(
        record_id=uuid.uuid4().hex,
        doc_id=doc.doc_id,
        values=values,
        extracted_at=datetime.now(timezone.utc).isoformat(),
        provider_id=getattr(llm, "provider_id", "unknown"),
    )
    store.add(record)
    return record


def _record_dict(rec: ExtractionRecord, schema: ExtractionSchema) -> dict:
    return {
        "record_id": rec.record_id,
        "doc_id": rec.doc_id,
        "extracted_at": rec.extracted_at,
        "provider_id": rec.provider_id,
        "values": {key: rec.values[key] for key in schema.field_keys()},
    }


def export_records_json(store: RecordStore, schema: ExtractionSchema) -> str:
    return json.dumps(
        [_record_dict(r, schema) for r in store.all()], ensure_ascii=False, indent=2
    )


def export_records_csv(store: RecordStore, schema: ExtractionSchema) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    keys = schema.field_keys()
    writer.writerow(["record_id", "doc_id"] + keys)
    for rec in store.all():
        writer.writerow([rec.record_id, rec.doc_id] + [rec.values[k] for k in keys])
    return buf.getvalue()


def export_records(
    store: RecordStore, schema: ExtractionSchema, fmt: str, dest: str | Path
) -> int:
    if fmt == "json":
        payload = export_records_json(store, schema)
    elif fmt == "csv":
        payload = export_records_csv(store, schema)
    else:
        raise ValueError(f"unknown export format '{fmt}'")
    Path(dest).write_text(payload, encoding="utf-8")
    return len(store)


def import_records_json(text: str, store: RecordStore):
    for item in json.loads(text):
        store.add(
            ExtractionRecord(
                record_id=item["record_id"],
                doc_id=item["doc_id"],
                values=dict(item["values"]),
                extracted_at=item["extracted_at"],
                provider_id=item["provider_id"],
            )
        )
