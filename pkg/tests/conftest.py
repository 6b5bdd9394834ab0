import numpy as np
import pytest

from ragengine.vindex import VectorRecord

DIM = 384

# one "[PASS]/[FAIL] <criterion>" line per acceptance criterion, printed after
# the run (direct prints would be swallowed by pytest's output capture)
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_unit_vectors(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal((n, DIM))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def make_records(vectors: np.ndarray, prefix: str = "v") -> list:
    return [
        VectorRecord(
            vector_id=f"{prefix}{i:05d}",
            embedding=vectors[i],
            chunk_id=f"{prefix}{i:05d}:0",
            doc_id=f"doc-{i}",
            metadata={"doc_id": f"doc-{i}", "chunk_id": f"{prefix}{i:05d}:0", "seq": "0"},
        )
        for i in range(vectors.shape[0])
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
