import csv
import io
import json

import pytest
from hypothesis import given, settings, strategies as st

from ragengine.corpus import Document
from ragengine.errors import EmptyDocument, MalformedJson, NotAnObject
from ragengine.extraction import (
    ExtractionSchema,
    RecordStore,
    SENTINEL,
    build_extraction_prompt,
    export_records,
    export_records_csv,
    export_records_json,
    extract_metadata,
    import_records_json,
    parse_extraction_response,
)

SCHEMA = ExtractionSchema()
KEYS = SCHEMA.field_keys()


def make_doc(text="Soil pH was 5.2", doc_id="doc-1"):
    return Document(
        doc_id=doc_id,
        source_path="/tmp/x.txt",
        raw_text=text,
        biblio={},
        ingested_at="2026-01-01T00:00:00+00:00",
        content_hash="h",
    )


class ScriptedLLM:
    provider_id = "scripted-extract"

    def __init__(self, replies):
        self.replies = list(replies)
        self.calls = []

    def complete(self, prompt):
        reply = self.replies[min(len(self.calls), len(self.replies) - 1)]
        self.calls.append(prompt)
        return reply


# -- schema -----------------------------------------------------------------


def test_default_schema_categories():
    names = [name for name, _ in SCHEMA.categories]
    assert names == ["bibliographic", "plant_material", "experimental_conditions", "outcomes"]
    assert "soil_ph" in KEYS and "colonization_percentage" in KEYS
    assert len(KEYS) == len(set(KEYS))


def test_schema_rejects_duplicate_keys():
    with pytest.raises(ValueError):
        ExtractionSchema(categories=(("a", (("k", ""), ("k", ""))),))


def test_schema_from_json_file(tmp_path):
    p = tmp_path / "schema.json"
    p.write_text(json.dumps({
        "categories": [{"name": "c", "fields": [{"key": "f1", "description": "d"}]}]
    }))
    s = ExtractionSchema.from_json_file(p)
    assert s.field_keys() == ["f1"]


# -- prompt -----------------------------------------------------------------


def test_prompt_contains_rules_fields_and_text():
    prompt = build_extraction_prompt("T", SCHEMA)
    for rule in (
        'Extract only explicitly mentioned data; if missing, return "N/A".',
        "Do not infer values.",
        "Ensure valid JSON formatting.",
    ):
        assert rule in prompt
    rule_pos = prompt.index("Do not infer values.")
    field_pos = prompt.index("- title (bibliographic)")
    text_pos = prompt.rindex("T")
    assert rule_pos < field_pos < text_pos


def test_prompt_empty_document():
    with pytest.raises(EmptyDocument):
        build_extraction_prompt("   ", SCHEMA)


def test_prompt_truncation_budget():
    template_size = len(build_extraction_prompt("x", SCHEMA, text_budget=100)) - 1
    long = "y" * 5000
    prompt = build_extraction_prompt(long, SCHEMA, text_budget=100)
    assert "[document truncated]" in prompt
    assert len(prompt) <= 100 + template_size + len("\n[document truncated]")
    short = build_extraction_prompt("y" * 50, SCHEMA, text_budget=100)
    assert "[document truncated]" not in short


# -- parse ------------------------------------------------------------------


def test_parse_fills_sentinels_and_counts():
    values, warnings = parse_extraction_response('{"title":"X","doi":null}', SCHEMA)
    assert values["title"] == "X"
    assert values["doi"] == SENTINEL
    assert all(values[k] == SENTINEL for k in KEYS if k not in ("title",))
    assert warnings["missing"] == len(KEYS) - 2
    assert warnings["unknown"] == 0


def test_parse_strips_code_fence():
    fenced = '```json\n{"title":"X"}\n```'
    assert parse_extraction_response(fenced, SCHEMA) == parse_extraction_response(
        '{"title":"X"}', SCHEMA
    )


def test_parse_malformed():
    with pytest.raises(MalformedJson):
        parse_extraction_response("not json at all", SCHEMA)


def test_parse_not_an_object():
    with pytest.raises(NotAnObject):
        parse_extraction_response("[1,2,3]", SCHEMA)


def test_parse_key_normalization():
    values, _ = parse_extraction_response('{"Soil-PH": "6.5", "SOIL PH": "ignored-dup"}', SCHEMA)
    assert values["soil_ph"] in ("6.5", "ignored-dup")


def test_parse_unknown_keys_dropped():
    values, warnings = parse_extraction_response('{"bogus": 1, "title": "X"}', SCHEMA)
    assert "bogus" not in values
    assert warnings["unknown"] == 1


def test_parse_value_coercion():
    raw = json.dumps({
        "title": "",
        "soil_ph": 6.5,
        "authors": ["A", "B"],
        "altitude": None,
        "keywords": [],
    })
    values, _ = parse_extraction_response(raw, SCHEMA)
    assert values["title"] == SENTINEL          # empty string -> sentinel
    assert values["soil_ph"] == "6.5"
    assert values["authors"] == "A; B"
    assert values["altitude"] == SENTINEL
    assert values["keywords"] == SENTINEL       # empty array -> sentinel


def test_parse_preserves_schema_order():
    values, _ = parse_extraction_response('{"doi":"d","title":"t"}', SCHEMA)
    assert list(values.keys()) == KEYS


# -- schema closure property ------------------------------------------------

json_scalars = st.one_of(
    st.none(),
    st.booleans(),
    st.integers(-1000, 1000),
    st.floats(allow_nan=False, allow_infinity=False, width=32),
    st.text(max_size=20),
)


@settings(max_examples=200, deadline=None)
@given(
    subset=st.lists(st.sampled_from(KEYS), max_size=len(KEYS), unique=True),
    junk=st.dictionaries(
        st.text(alphabet="QZ_xy0", min_size=1, max_size=8), json_scalars, max_size=5
    ),
    fenced=st.booleans(),
    data=st.data(),
)
def test_schema_closure_property(subset, junk, fenced, data):
    payload = {k: data.draw(json_scalars) for k in subset}
    payload.update({k: v for k, v in junk.items()})
    raw = json.dumps(payload)
    if fenced:
        raw = f"```json\n{raw}\n```"
    values, _ = parse_extraction_response(raw, SCHEMA)
    assert list(values.keys()) == KEYS
    assert all(isinstance(v, str) and v != "" for v in values.values())


# -- extract_metadata -------------------------------------------------------


def test_extract_roundtrip_value():
    store = RecordStore()
    llm = ScriptedLLM(['{"soil_ph": "5.2"}'])
    rec = extract_metadata(make_doc(), llm, SCHEMA, store)
    assert rec.values["soil_ph"] == "5.2"
    assert len(store) == 1


def test_extract_idempotent():
    store = RecordStore()
    llm = ScriptedLLM(['{"soil_ph": "5.2"}'])
    doc = make_doc()
    r1 = extract_metadata(doc, llm, SCHEMA, store)
    r2 = extract_metadata(doc, llm, SCHEMA, store)
    assert r1.record_id == r2.record_id
    assert len(store) == 1
    assert len(llm.calls) == 1


def test_extract_force_re_extracts():
    store = RecordStore()
    llm = ScriptedLLM(['{"soil_ph": "5.2"}', '{"soil_ph": "9.9"}'])
    doc = make_doc()
    extract_metadata(doc, llm, SCHEMA, store)
    r2 = extract_metadata(doc, llm, SCHEMA, store, force=True)
    assert r2.values["soil_ph"] == "9.9"


def test_extract_retry_once_then_succeed():
    store = RecordStore()
    llm = ScriptedLLM(["garbage", '{"title": "X"}'])
    rec = extract_metadata(make_doc(), llm, SCHEMA, store)
    assert rec.values["title"] == "X"
    assert len(llm.calls) == 2
    assert "Ensure valid JSON formatting" in llm.calls[1]


def test_extract_fails_after_exactly_one_retry():
    store = RecordStore()
    llm = ScriptedLLM(["garbage", "still garbage"])
    with pytest.raises(MalformedJson):
        extract_metadata(make_doc(), llm, SCHEMA, store)
    assert len(llm.calls) == 2
    assert len(store) == 0  # atomicity: nothing persisted


# -- export / import --------------------------------------------------------


def _store_with(n):
    store = RecordStore()
    llm = ScriptedLLM(['{"title": "Paper, with comma", "authors": ["A","B"]}'])
    for i in range(n):
        extract_metadata(make_doc(doc_id=f"doc-{i}"), llm, SCHEMA, store)
    return store


def test_export_empty_store(tmp_path):
    store = RecordStore()
    assert export_records(store, SCHEMA, "json", tmp_path / "r.json") == 0
    assert json.loads((tmp_path / "r.json").read_text()) == []
    assert export_records(store, SCHEMA, "csv", tmp_path / "r.csv") == 0
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert len(lines) == 1  # header only


def test_export_csv_rfc4180():
    store = _store_with(2)
    text = export_records_csv(store, SCHEMA)
    rows = list(csv.reader(io.StringIO(text)))
    assert len(rows) == 3
    assert rows[0] == ["record_id", "doc_id"] + KEYS
    title_col = rows[0].index("title")
    assert rows[1][title_col] == "Paper, with comma"  # quoted field survives parsing
    assert "\r" not in text  # LF line endings


def test_export_json_roundtrip():
    store = _store_with(3)
    payload = export_records_json(store, SCHEMA)
    restored = RecordStore()
    import_records_json(payload, restored)
    orig = {r.record_id: r for r in store.all()}
    back = {r.record_id: r for r in restored.all()}
    assert orig.keys() == back.keys()
    for rid in orig:
        assert orig[rid].values == back[rid].values
        assert orig[rid].doc_id == back[rid].doc_id


def test_export_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        export_records(RecordStore(), SCHEMA, "xlsx", tmp_path / "r.xlsx")
