"""Hot search kernels for the vector index.

Two interchangeable backends implement the same graph-layer search and
diversity-aware neighbor selection:

* ``numba`` — ``@njit``-compiled loops over flat adjacency arrays (default)
* ``numpy`` — pure numpy + heapq fallback

Set ``ENGINE_NO_NUMBA=1`` to force the fallback (also used if numba is not
importable). ``benchmarks/bench_index.py`` compares the two.
"""

from __future__ import annotations

import heapq
import os
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

ENV_FLAG = "ENGINE_NO_NUMBA"


def numba_disabled_by_env() -> bool:
    return os.environ.get(ENV_FLAG, "").strip().lower() in ("1", "true", "yes")


# ---------------------------------------------------------------------------
# numpy fallback
# ---------------------------------------------------------------------------


def search_layer_numpy(
    vectors: np.ndarray,
    adj: np.ndarray,
    cnt: np.ndarray,
    alive: np.ndarray,
    query: np.ndarray,
    entries: np.ndarray,
    ef: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """Greedy best-first search over one graph layer.

    Returns (ids, dists) of up to ``ef`` alive nodes, ascending by cosine
    distance (1 - dot). Dead nodes are traversed for routing but never
    returned.
    """
    n = vectors.shape[0]
    visited = np.zeros(n, dtype=bool)
    cand: list = []   # min-heap of (dist, id)
    best: list = []   # max-heap of (-dist, id), capped at ef

    for e in entries:
        e = int(e)
        if visited[e]:
            continue
        visited[e] = True
        d = 1.0 - float(vectors[e] @ query)
        heapq.heappush(cand, (d, e))
        if alive[e]:
            heapq.heappush(best, (-d, e))
            if len(best) > ef:
                heapq.heappop(best)

    while cand:
        d, c = heapq.heappop(cand)
        if len(best) >= ef and d > -best[0][0]:
            break
        nbrs = adj[c, : cnt[c]]
        nbrs = nbrs[~visited[nbrs]]
        if nbrs.size == 0:
            continue
        visited[nbrs] = True
        nd = 1.0 - vectors[nbrs] @ query
        for j, dj in zip(nbrs, nd):
            dj = float(dj)
            if len(best) < ef or dj < -best[0][0]:
                heapq.heappush(cand, (dj, int(j)))
                if alive[j]:
                    heapq.heappush(best, (-dj, int(j)))
                    if len(best) > ef:
                        heapq.heappop(best)

    pairs = sorted((-nd, i) for nd, i in best)
    ids = np.array([i for _, i in pairs], dtype=np.int64)
    dists = np.array([d for d, _ in pairs], dtype=np.float64)
    return ids, dists


def select_neighbors_numpy(
    vectors: np.ndarray, cand_ids: np.ndarray, cand_dists: np.ndarray, m: int,
    refill: bool = True,
) -> np.ndarray:
    """Diversity-aware neighbor selection (HNSW Algorithm 4).

    With ``refill`` the pruned-but-closest candidates top the list back up to
    ``m`` (used when wiring a new node); without it the list stays diverse
    (used when shrinking an overflowing neighbor list).
    """
    order = np.argsort(cand_dists, kind="stable")
    cand_ids = cand_ids[order]
    cand_dists = cand_dists[order]
    if cand_ids.size <= m:
        return cand_ids.astype(np.int64)

    selected: list = []
    discarded: list = []
    for cid, cd in zip(cand_ids, cand_dists):
        if len(selected) >= m:
            break
        if not selected:
            selected.append(int(cid))
            continue
        d_to_sel = 1.0 - vectors[selected] @ vectors[int(cid)]
        if cd < float(np.min(d_to_sel)):
            selected.append(int(cid))
        else:
            discarded.append(int(cid))
    if refill:
        for cid in discarded:
            if len(selected) >= m:
                break
            selected.append(cid)
    return np.array(selected, dtype=np.int64)


# ---------------------------------------------------------------------------
# numba backend
# ---------------------------------------------------------------------------


def _build_numba_kernels():
    from numba import njit

    @njit(cache=True, inline="always", fastmath=True)
    def _dot(vectors, i, query):
        s = np.float32(0.0)
        for d in range(vectors.shape[1]):
            s += vectors[i, d] * query[d]
        return s

    @njit(cache=True)
    def _heap_push(hd, hi, size, d, i):
        hd[size] = d
        hi[size] = i
        c = size
        while c > 0:
            p = (c - 1) >> 1
            if hd[p] > hd[c]:
                hd[p], hd[c] = hd[c], hd[p]
                hi[p], hi[c] = hi[c], hi[p]
                c = p
            else:
                break
        return size + 1

    @njit(cache=True)
    def _heap_pop(hd, hi, size):
        d = hd[0]
        i = hi[0]
        size -= 1
        hd[0] = hd[size]
        hi[0] = hi[size]
        c = 0
        while True:
            l = 2 * c + 1
            r = l + 1
            s = c
            if l < size and hd[l] < hd[s]:
                s = l
            if r < size and hd[r] < hd[s]:
                s = r
            if s == c:
                break
            hd[s], hd[c] = hd[c], hd[s]
            hi[s], hi[c] = hi[c], hi[s]
            c = s
        return d, i, size

    @njit(cache=True)
    def _search_layer(vectors, adj, cnt, alive, query, entries, ef):
        n = vectors.shape[0]
        visited = np.zeros(n, dtype=np.uint8)
        cand_d = np.empty(n, dtype=np.float64)
        cand_i = np.empty(n, dtype=np.int64)
        cand_n = 0
        # best: max-heap via negated distances
        best_d = np.empty(ef + 1, dtype=np.float64)
        best_i = np.empty(ef + 1, dtype=np.int64)
        best_n = 0

        for k in range(entries.shape[0]):
            e = entries[k]
            if visited[e] == 1:
                continue
            visited[e] = 1
            d = 1.0 - _dot(vectors, e, query)
            cand_n = _heap_push(cand_d, cand_i, cand_n, d, e)
            if alive[e] == 1:
                best_n = _heap_push(best_d, best_i, best_n, -d, e)
                if best_n > ef:
                    _, _, best_n = _heap_pop(best_d, best_i, best_n)

        while cand_n > 0:
            d, c, cand_n = _heap_pop(cand_d, cand_i, cand_n)
            if best_n >= ef and d > -best_d[0]:
                break
            for t in range(cnt[c]):
                j = adj[c, t]
                if visited[j] == 1:
                    continue
                visited[j] = 1
                dj = 1.0 - _dot(vectors, j, query)
                if best_n < ef or dj < -best_d[0]:
                    cand_n = _heap_push(cand_d, cand_i, cand_n, dj, j)
                    if alive[j] == 1:
                        best_n = _heap_push(best_d, best_i, best_n, -dj, j)
                        if best_n > ef:
                            _, _, best_n = _heap_pop(best_d, best_i, best_n)

        out_d = np.empty(best_n, dtype=np.float64)
        out_i = np.empty(best_n, dtype=np.int64)
        k = best_n
        while best_n > 0:
            nd, i, best_n = _heap_pop(best_d, best_i, best_n)
            # popping the max-heap yields farthest-first: fill from the back
            out_d[best_n] = -nd
            out_i[best_n] = i
        # max-heap pops in no particular order for equal keys; sort to be safe
        order = np.argsort(out_d)
        return out_i[order], out_d[order]

    @njit(cache=True)
    def _select_neighbors(vectors, cand_ids, cand_dists, m, refill):
        order = np.argsort(cand_dists)
        nc = cand_ids.shape[0]
        if nc <= m:
            out = np.empty(nc, dtype=np.int64)
            for k in range(nc):
                out[k] = cand_ids[order[k]]
            return out
        selected = np.empty(m, dtype=np.int64)
        ns = 0
        discarded = np.empty(nc, dtype=np.int64)
        nd_ = 0
        for k in range(nc):
            if ns >= m:
                break
            cid = cand_ids[order[k]]
            cd = cand_dists[order[k]]
            if ns == 0:
                selected[0] = cid
                ns = 1
                continue
            dmin = 1e30
            for s in range(ns):
                ds = 1.0 - _dot(vectors, selected[s], vectors[cid])
                if ds < dmin:
                    dmin = ds
            if cd < dmin:
                selected[ns] = cid
                ns += 1
            else:
                discarded[nd_] = cid
                nd_ += 1
        if refill:
            k = 0
            while ns < m and k < nd_:
                selected[ns] = discarded[k]
                ns += 1
                k += 1
        return selected[:ns]

    return _search_layer, _select_neighbors


# Note for the max-heap pop in _search_layer: popping yields increasing -d,
# i.e. decreasing distance, so filling from the back gives ascending order
# already; the final argsort only canonicalizes equal-distance entries.


@dataclass(frozen=True)
class KernelBackend:
    name: str
    search_layer: Callable
    select_neighbors: Callable


_NUMPY_BACKEND = KernelBackend("numpy", search_layer_numpy, select_neighbors_numpy)
_numba_backend = None


def get_backend(name: str | None = None) -> KernelBackend:
    """Resolve a kernel backend by name, or the environment default."""
    global _numba_backend
    if name is None:
        name = "numpy" if numba_disabled_by_env() else "numba"
    if name == "numpy":
        return _NUMPY_BACKEND
    if name == "numba":
        if _numba_backend is None:
            try:
                search, select = _build_numba_kernels()
            except ImportError:
                return _NUMPY_BACKEND
            _numba_backend = KernelBackend("numba", search, select)
        return _numba_backend
    raise ValueError(f"unknown kernel backend '{name}'")
