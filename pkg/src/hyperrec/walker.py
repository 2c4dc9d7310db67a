"""Random walks over the weighted hypergraph.

At every step the walker keeps its current hyperedge with probability
``stay_probability`` and otherwise re-draws one uniformly from the edges
incident to the current vertex (possibly the same one). The next vertex is
drawn from that edge's other vertices in proportion to their in-edge
weights (hub 1, members their normalized weights).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable

import numba as nb
import numpy as np

from ._rng import SplitMix64, derive, randbelow, uniform
from .hypergraph import Hypergraph, VertexId, VertexKind

log = logging.getLogger(__name__)

_MAGIC = "#hyperrec-walks"


class WalkError(ValueError):
    pass


@dataclass(frozen=True)
class WalkConfig:
    r: int = 5
    k: int = 200
    stay_probability: float = 0.5
    seed: int = 0
    start_kinds: frozenset[VertexKind] | None = None

    def __post_init__(self):
        if self.r < 1 or self.k < 1:
            raise WalkError(f"r and k must be >= 1, got r={self.r}, k={self.k}")
        if not 0.0 <= self.stay_probability <= 1.0:
            raise WalkError(f"stay_probability must lie in [0, 1], got {self.stay_probability}")
        if self.start_kinds is not None:
            object.__setattr__(self, "start_kinds", frozenset(VertexKind(k) for k in self.start_kinds))


@dataclass
class WalkCorpus:
    """Walks as rows of dense vertex indices, ordered by (start vertex, iteration)."""

    walks: np.ndarray
    fingerprint: str
    config: WalkConfig = field(default_factory=WalkConfig)

    def __len__(self) -> int:
        return len(self.walks)

    def __iter__(self):
        return iter(self.walks)

    def transitions(self) -> np.ndarray:
        """All consecutive ``(v, v')`` pairs as an (m, 2) array."""
        if self.walks.shape[1] < 2:
            return np.empty((0, 2), dtype=np.int64)
        return np.stack([self.walks[:, :-1].ravel(), self.walks[:, 1:].ravel()], axis=1)

    def save(self, path) -> None:
        c = self.config
        kinds = "all" if c.start_kinds is None else ",".join(sorted(k.label for k in c.start_kinds))
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(f"{_MAGIC} fingerprint={self.fingerprint} r={c.r} k={c.k} "
                     f"stay_probability={c.stay_probability!r} seed={c.seed} start_kinds={kinds}\n")
            for row in self.walks:
                fh.write(" ".join(map(str, row.tolist())) + "\n")

    @classmethod
    def load(cls, path) -> "WalkCorpus":
        with open(path, encoding="ascii") as fh:
            header = fh.readline().split()
            if not header or header[0] != _MAGIC:
                raise WalkError(f"{path}: not a walk corpus (bad header)")
            meta = dict(item.split("=", 1) for item in header[1:])
            rows = [list(map(int, line.split())) for line in fh if line.strip()]
        kinds = None
        if meta["start_kinds"] != "all":
            labels = {k.label: k for k in VertexKind}
            kinds = frozenset(labels[x] for x in meta["start_kinds"].split(","))
        config = WalkConfig(int(meta["r"]), int(meta["k"]), float(meta["stay_probability"]),
                            int(meta["seed"]), kinds)
        if any(len(row) != config.k for row in rows):
            raise WalkError(f"{path}: walk length differs from header k={config.k}")
        walks = np.array(rows, dtype=np.int64).reshape(len(rows), config.k)
        return cls(walks, meta["fingerprint"], config)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


@nb.njit(cache=True)
def _draw_in_edge(e, slot, edge_ptr, edge_cum, edge_weight, state):
    """Weighted draw of a slot of edge ``e`` other than ``slot``; -1 if none."""
    lo = edge_ptr[e]
    hi = edge_ptr[e + 1]
    w_cur = edge_weight[slot]
    total = edge_cum[hi - 1] - w_cur
    if not total > 0.0:
        return -1
    x = uniform(state) * total
    if x >= edge_cum[slot] - w_cur:
        x += w_cur
    # first slot whose running sum exceeds x
    a = lo
    b = hi - 1
    while a < b:
        mid = (a + b) // 2
        if edge_cum[mid] > x:
            b = mid
        else:
            a = mid + 1
    if a == slot:
        # x landed on the excluded slot's upper boundary through rounding
        a = slot - 1 if slot > lo else slot + 1
    return a


@nb.njit(cache=True)
def _step(v, e, slot, stay, edge_ptr, edge_vertex, edge_weight, edge_cum, adj_ptr, adj_edge, adj_slot, state):
    """One transition. Returns ``(next_vertex, edge, next_slot)`` or ``(-1, -1, -1)``."""
    a0 = adj_ptr[v]
    deg = adj_ptr[v + 1] - a0
    if uniform(state) >= stay:
        j = a0 + randbelow(state, deg)
        e = adj_edge[j]
        slot = adj_slot[j]
    nxt = _draw_in_edge(e, slot, edge_ptr, edge_cum, edge_weight, state)
    if nxt < 0:
        # degenerate edge: fall back to any incident edge with another vertex
        for t in range(deg):
            j = a0 + (randbelow(state, deg) + t) % deg
            nxt = _draw_in_edge(adj_edge[j], adj_slot[j], edge_ptr, edge_cum, edge_weight, state)
            if nxt >= 0:
                e = adj_edge[j]
                break
        if nxt < 0:
            return -1, -1, -1
    return edge_vertex[nxt], e, nxt


def _walks_impl(starts, r, k, stay, seed, edge_ptr, edge_vertex, edge_weight, edge_cum,
                adj_ptr, adj_edge, adj_slot, out, lengths):
    n = starts.shape[0] * r
    for w in nb.prange(n):
        v = starts[w // r]
        state = np.empty(1, dtype=np.uint64)
        state[0] = derive(seed, v, w % r)
        a0 = adj_ptr[v]
        j = a0 + randbelow(state, adj_ptr[v + 1] - a0)
        e = adj_edge[j]
        slot = adj_slot[j]
        out[w, 0] = v
        length = 1
        for i in range(1, k):
            v, e, slot = _step(v, e, slot, stay, edge_ptr, edge_vertex, edge_weight, edge_cum,
                               adj_ptr, adj_edge, adj_slot, state)
            if v < 0:
                break
            out[w, i] = v
            length += 1
        lengths[w] = length


_walks_serial = nb.njit(cache=True)(_walks_impl)
_walks_parallel = nb.njit(parallel=True)(_walks_impl)


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def _slot_of(g: Hypergraph, v: VertexId, e: int) -> int:
    arr = g.arrays
    lo, hi = arr.edge_ptr[e], arr.edge_ptr[e + 1]
    hits = np.flatnonzero(arr.edge_vertex[lo:hi] == v.index)
    if hits.size == 0:
        raise WalkError(f"vertex {v.key!r} is not in edge {e}")
    return int(lo + hits[0])


def step(g: Hypergraph, current_vertex: VertexId, current_edge: int, rng: SplitMix64,
         stay_probability: float = 0.5) -> tuple[VertexId, int]:
    """Advance one step from ``current_vertex`` sitting in ``current_edge``."""
    g._check_vertex(current_vertex)
    g._check_edge(current_edge)
    arr = g.arrays
    slot = _slot_of(g, current_vertex, current_edge)
    nxt, e, _ = _step(current_vertex.index, current_edge, slot, stay_probability, arr.edge_ptr,
                      arr.edge_vertex, arr.edge_weight, arr.edge_cum, arr.adj_ptr, arr.adj_edge,
                      arr.adj_slot, rng.state)
    if nxt < 0:
        raise WalkError(f"no admissible transition from {current_vertex.key!r}")
    return g.vertices[nxt], int(e)


def start_vertices(g: Hypergraph, kinds: Iterable[VertexKind] | None = None) -> np.ndarray:
    kinds = None if kinds is None else set(kinds)
    starts = []
    for v in g.vertices:
        if kinds is not None and v.kind not in kinds:
            continue
        if not g.adjacency[v.index]:
            log.warning("vertex %s %r has no incident edge; skipped", v.kind.label, v.key)
            continue
        starts.append(v.index)
    return np.array(starts, dtype=np.int64)


def generate_walks(g: Hypergraph, config: WalkConfig = WalkConfig(), threads: int = 1) -> WalkCorpus:
    """Run ``r`` walks of ``k`` vertices from every start vertex.

    Each walk has its own RNG stream derived from ``(seed, vertex, iteration)``
    so the corpus is identical for any thread count.
    """
    arr = g.arrays
    starts = start_vertices(g, config.start_kinds)
    n = len(starts) * config.r
    out = np.zeros((n, config.k), dtype=np.int64)
    lengths = np.zeros(n, dtype=np.int64)
    if n:
        kernel = _walks_serial
        if threads > 1:
            nb.set_num_threads(min(threads, nb.config.NUMBA_NUM_THREADS))
            kernel = _walks_parallel
        kernel(starts, config.r, config.k, float(config.stay_probability), np.uint64(config.seed & 0xFFFFFFFFFFFFFFFF),
               arr.edge_ptr, arr.edge_vertex, arr.edge_weight, arr.edge_cum,
               arr.adj_ptr, arr.adj_edge, arr.adj_slot, out, lengths)
    short = np.flatnonzero(lengths < config.k)
    if short.size:
        raise WalkError(f"{short.size} walk(s) aborted early; first starts at vertex {out[short[0], 0]}")
    return WalkCorpus(out, g.fingerprint, config)


def invalid_transitions(g: Hypergraph, corpus: WalkCorpus) -> list[tuple[int, int]]:
    """Consecutive pairs that share no hyperedge or repeat a vertex."""
    incident = [set(a) for a in g.adjacency]
    bad = []
    for a, b in corpus.transitions().tolist():
        if a == b or not incident[a] & incident[b]:
            bad.append((a, b))
    return bad
