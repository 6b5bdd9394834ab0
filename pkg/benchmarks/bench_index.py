"""Compare the numba and numpy kernel backends on index build and query.

Usage:
    python3 benchmarks/bench_index.py [--n 5000] [--queries 100] [--k 10] [--ef 64]
"""

import argparse
import time

import numpy as np

from ragengine.kernels import get_backend
from ragengine.vindex import VectorIndex, VectorRecord


def make_records(vectors):
    return [
        VectorRecord(
            vector_id=f"v{i:06d}",
            embedding=vectors[i],
            chunk_id=f"v{i:06d}:0",
            doc_id=f"d{i}",
            metadata={"doc_id": f"d{i}"},
        )
        for i in range(vectors.shape[0])
    ]


def bench_backend(name, vectors, queries, k, ef):
    backend = get_backend(name)
    if backend.name != name:
        print(f"{name:>6}: unavailable (resolved to {backend.name}), skipping")
        return

    idx = VectorIndex(backend=backend)
    # warm up JIT compilation outside the timed section
    idx.upsert(make_records(vectors[:8]))
    idx.query_ann(queries[0], min(k, 8), ef_search=max(ef, k))

    idx = VectorIndex(backend=backend)
    t0 = time.perf_counter()
    idx.upsert(make_records(vectors))
    build_s = time.perf_counter() - t0

    exact = [{r.vector_id for r in idx.query_exact(q, k)} for q in queries]
    t0 = time.perf_counter()
    hits = [{r.vector_id for r in idx.query_ann(q, k, ef_search=ef)} for q in queries]
    query_ms = (time.perf_counter() - t0) / len(queries) * 1000
    recall = float(np.mean([len(h & e) / k for h, e in zip(hits, exact)]))

    print(
        f"{name:>6}: build {build_s:7.2f}s ({build_s / len(vectors) * 1000:6.2f} ms/insert)"
        f"  query {query_ms:6.2f} ms  recall@{k} {recall:.3f}"
    )


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=5000)
    parser.add_argument("--queries", type=int, default=100)
    parser.add_argument("--k", type=int, default=10)
    parser.add_argument("--ef", type=int, default=64)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    vectors = rng.standard_normal((args.n, 384))
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    queries = rng.standard_normal((args.queries, 384))
    queries /= np.linalg.norm(queries, axis=1, keepdims=True)

    print(f"n={args.n} dim=384 k={args.k} ef_search={args.ef}")
    for name in ("numba", "numpy"):
        bench_backend(name, vectors, queries, args.k, args.ef)


if __name__ == "__main__":
    main()
