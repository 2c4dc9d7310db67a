"""Weighted music hypergraph over users, tracks, albums, artists and tags.

Four hyperedge kinds are built:

* ``e1`` user -> the tracks the user played, weighted by play-count share
* ``e2`` track -> the tags attached to it, weighted by tag-count share
* ``e3`` album -> its played tracks, weighted by the tracks' total plays
* ``e4`` artist -> its played tracks, weighted likewise

The defining vertex of an edge (its *hub*) carries weight 1; member weights
are normalized to sum to 1 within the edge.
"""

from __future__ import annotations

import enum
import hashlib
import json
from collections import defaultdict
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy import sparse

from .dataset import Catalog, InteractionTable, TagTable


class GraphError(ValueError):
    pass


class VertexKind(enum.IntEnum):
    USER = 0
    TRACK = 1
    ALBUM = 2
    ARTIST = 3
    TAG = 4

    @property
    def label(self) -> str:
        return self.name.lower()


class EdgeKind(enum.IntEnum):
    USER_TRACK = 1
    TAG_TRACK = 2
    ALBUM_TRACK = 3
    ARTIST_TRACK = 4

    @property
    def label(self) -> str:
        return f"e{int(self)}"

    @classmethod
    def parse(cls, text: str) -> "EdgeKind":
        text = text.strip().lower()
        for kind in cls:
            if text in (kind.label, kind.name.lower()):
                return kind
        raise ValueError(f"unknown hyperedge kind {text!r}; expected one of e1, e2, e3, e4")


ALL_EDGE_KINDS = frozenset(EdgeKind)

_HUB_KIND = {
    EdgeKind.USER_TRACK: VertexKind.USER,
    EdgeKind.TAG_TRACK: VertexKind.TRACK,
    EdgeKind.ALBUM_TRACK: VertexKind.ALBUM,
    EdgeKind.ARTIST_TRACK: VertexKind.ARTIST,
}
_MEMBER_KIND = {
    EdgeKind.USER_TRACK: VertexKind.TRACK,
    EdgeKind.TAG_TRACK: VertexKind.TAG,
    EdgeKind.ALBUM_TRACK: VertexKind.TRACK,
    EdgeKind.ARTIST_TRACK: VertexKind.TRACK,
}


@dataclass(frozen=True)
class VertexId:
    kind: VertexKind
    key: str
    index: int


@dataclass(frozen=True)
class Hyperedge:
    kind: EdgeKind
    hub: VertexId
    members: tuple[tuple[VertexId, float], ...]

    @property
    def degree(self) -> int:
        return 1 + len(self.members)

    def vertices(self) -> list[VertexId]:
        return [self.hub, *(v for v, _ in self.members)]

    def weight_of(self, v: VertexId) -> float:
        if v == self.hub:
            return 1.0
        for m, w in self.members:
            if m == v:
                return w
        raise KeyError(v)


def _normalized(counts: dict[str, float]) -> list[tuple[str, float]]:
    total = float(sum(counts.values()))
    return [(key, c / total) for key, c in counts.items()]


class Hypergraph:
    """Immutable hypergraph with dense vertex indices and CSR-style arrays.

    Vertices are indexed contiguously in kind blocks (users, tracks,
    albums, artists, tags), first-seen order within a block.
    """

    def __init__(self, vertices: list[tuple[VertexKind, str]], edges: Iterable[tuple[EdgeKind, int, list[tuple[int, float]]]]):
        self.vertices: list[VertexId] = [VertexId(VertexKind(k), key, i) for i, (k, key) in enumerate(vertices)]
        self._index = {(v.kind, v.key): v for v in self.vertices}
        if len(self._index) != len(self.vertices):
            raise GraphError("duplicate (kind, key) vertex")
        self.edges: list[Hyperedge] = []
        adjacency: list[list[int]] = [[] for _ in self.vertices]
        for kind, hub, members in edges:
            kind = EdgeKind(kind)
            if not members:
                raise GraphError(f"{kind.label} edge at hub {self.vertices[hub].key!r} has no members")
            edge = Hyperedge(kind, self.vertices[hub], tuple((self.vertices[m], float(w)) for m, w in members))
            j = len(self.edges)
            self.edges.append(edge)
            adjacency[hub].append(j)
            for m, _ in members:
                adjacency[m].append(j)
        self.adjacency: list[tuple[int, ...]] = [tuple(a) for a in adjacency]

    # ------------------------------------------------------------------ lookup

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def vertex(self, kind: VertexKind, key: str) -> VertexId:
        try:
            return self._index[(VertexKind(kind), key)]
        except KeyError:
            raise KeyError(f"no {VertexKind(kind).label} vertex {key!r}") from None

    def has_vertex(self, kind: VertexKind, key: str) -> bool:
        return (VertexKind(kind), key) in self._index

    def vertices_of(self, kind: VertexKind) -> list[VertexId]:
        return [v for v in self.vertices if v.kind == kind]

    def edges_of(self, kind: EdgeKind) -> list[Hyperedge]:
        return [e for e in self.edges if e.kind == kind]

    def _check_vertex(self, v: VertexId) -> VertexId:
        if not 0 <= v.index < len(self.vertices) or self.vertices[v.index] != v:
            raise KeyError(f"unknown vertex {v!r}")
        return v

    def _check_edge(self, e: int) -> Hyperedge:
        if not 0 <= e < len(self.edges):
            raise IndexError(f"edge index {e} out of range [0, {len(self.edges)})")
        return self.edges[e]

    def is_ordinary_graph(self) -> bool:
        """True when every hyperedge joins exactly two vertices."""
        return all(e.degree == 2 for e in self.edges)

    # ------------------------------------------------------------- identity

    @cached_property
    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for v in self.vertices:
            h.update(f"v\t{v.kind.label}\t{v.key}\n".encode())
        for e in self.edges:
            h.update(f"e\t{e.kind.label}\t{e.hub.index}".encode())
            for m, w in e.members:
                h.update(f"\t{m.index}:{w!r}".encode())
            h.update(b"\n")
        return h.hexdigest()[:16]

    # -------------------------------------------------------- numba arrays

    @cached_property
    def arrays(self) -> "EdgeArrays":
        return EdgeArrays.from_graph(self)

    # ---------------------------------------------------------------- dump

    def save(self, directory) -> None:
        """Write ``vertices.tsv`` and ``edges.jsonl``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "vertices.tsv", "w", encoding="utf-8", newline="\n") as fh:
            for v in self.vertices:
                fh.write(f"{v.index}\t{v.kind.label}\t{v.key}\n")
        dump_edges(self, directory / "edges.jsonl")

    @classmethod
    def load(cls, directory) -> "Hypergraph":
        directory = Path(directory)
        kinds = {k.label: k for k in VertexKind}
        vertices = []
        with open(directory / "vertices.tsv", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                idx, kind, key = line.rstrip("\n").split("\t", 2)
                if int(idx) != lineno - 1:
                    raise GraphError(f"vertices.tsv:{lineno}: non-contiguous index {idx}")
                vertices.append((kinds[kind], key))
        lookup = {(k, key): i for i, (k, key) in enumerate(vertices)}
        edges = []
        with open(directory / "edges.jsonl", encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                kind = EdgeKind.parse(rec["kind"])
                hub = lookup[(_HUB_KIND[kind], rec["hub"])]
                members = [(lookup[(_MEMBER_KIND[kind], key)], w) for key, w in rec["members"]]
                edges.append((kind, hub, members))
        return cls(vertices, edges)


def dump_edges(g: Hypergraph, path) -> None:
    """One JSON object per edge: kind, hub key and ``[member key, weight]`` pairs."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in g.edges:
            rec = {"kind": e.kind.label, "hub": e.hub.key, "members": [[m.key, w] for m, w in e.members]}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class EdgeArrays:
    """Flat edge/adjacency layout consumed by the walk kernels.

    Slot ``edge_ptr[e]`` holds the hub of edge ``e`` (weight 1), followed by
    its members. ``edge_cum`` is the running weight sum restarted per edge.
    ``adj_edge[adj_ptr[v]:adj_ptr[v+1]]`` lists the edges incident to ``v``
    and ``adj_slot`` the slot ``v`` occupies in each.
    """

    edge_ptr: np.ndarray
    edge_vertex: np.ndarray
    edge_weight: np.ndarray
    edge_cum: np.ndarray
    adj_ptr: np.ndarray
    adj_edge: np.ndarray
    adj_slot: np.ndarray

    @classmethod
    def from_graph(cls, g: Hypergraph) -> "EdgeArrays":
        sizes = np.array([e.degree for e in g.edges], dtype=np.int64)
        edge_ptr = np.zeros(len(g.edges) + 1, dtype=np.int64)
        np.cumsum(sizes, out=edge_ptr[1:])
        nnz = int(edge_ptr[-1])
        edge_vertex = np.empty(nnz, dtype=np.int64)
        edge_weight = np.empty(nnz, dtype=np.float64)
        edge_cum = np.empty(nnz, dtype=np.float64)
        slots_of: list[list[tuple[int, int]]] = [[] for _ in g.vertices]
        for j, e in enumerate(g.edges):
            p = int(edge_ptr[j])
            vs = [e.hub.index] + [m.index for m, _ in e.members]
            ws = [1.0] + [w for _, w in e.members]
            edge_vertex[p:p + len(vs)] = vs
            edge_weight[p:p + len(ws)] = ws
            edge_cum[p:p + len(ws)] = np.cumsum(ws)
            for k, v in enumerate(vs):
                slots_of[v].append((j, p + k))
        adj_ptr = np.zeros(len(g.vertices) + 1, dtype=np.int64)
        np.cumsum([len(s) for s in slots_of], out=adj_ptr[1:])
        adj_edge = np.array([j for s in slots_of for j, _ in s], dtype=np.int64)
        adj_slot = np.array([k for s in slots_of for _, k in s], dtype=np.int64)
        return cls(edge_ptr, edge_vertex, edge_weight, edge_cum, adj_ptr, adj_edge, adj_slot)


def build_hypergraph(
    train: InteractionTable,
    catalog: Catalog,
    tags: TagTable,
    enabled_edge_kinds: Iterable[EdgeKind] = ALL_EDGE_KINDS,
) -> Hypergraph:
    """Build the unified weighted hypergraph from training interactions.

    Album and artist weights use each track's total training play count;
    tag weights use the global per-track tag counts. Only tracks played in
    ``train`` join the graph.
    """
    enabled = {EdgeKind(k) if not isinstance(k, str) else EdgeKind.parse(k) for k in enabled_edge_kinds}
    if EdgeKind.USER_TRACK not in enabled:
        raise GraphError("e1 (user-track) hyperedges cannot be disabled")
    if len(train) == 0:
        raise GraphError("training table is empty")

    by_user = train.by_user()
    track_order: list[str] = []
    seen: set[str] = set()
    for _, track, _ in train:
        if track not in seen:
            seen.add(track)
            track_order.append(track)
    missing = [t for t in track_order if t not in catalog]
    if missing:
        raise GraphError(f"{len(missing)} played track(s) missing from catalog, e.g. {missing[0]!r}")
    totals = train.track_totals()

    album_tracks: dict[str, dict[str, int]] = defaultdict(dict)
    artist_tracks: dict[str, dict[str, int]] = defaultdict(dict)
    for track in track_order:
        entry = catalog[track]
        if entry.album is not None:
            album_tracks[entry.album][track] = totals[track]
        artist_tracks[entry.artist][track] = totals[track]
    tag_table = tags.by_track()
    tagged = [(t, tag_table[t]) for t in track_order if t in tag_table] if EdgeKind.TAG_TRACK in enabled else []

    vertices: list[tuple[VertexKind, str]] = [(VertexKind.USER, u) for u in by_user]
    vertices += [(VertexKind.TRACK, t) for t in track_order]
    if EdgeKind.ALBUM_TRACK in enabled:
        vertices += [(VertexKind.ALBUM, a) for a in album_tracks]
    if EdgeKind.ARTIST_TRACK in enabled:
        vertices += [(VertexKind.ARTIST, a) for a in artist_tracks]
    tag_order: dict[str, None] = {}
    for _, counts in tagged:
        for tag in counts:
            tag_order.setdefault(tag)
    vertices += [(VertexKind.TAG, t) for t in tag_order]
    index = {v: i for i, v in enumerate(vertices)}

    def members(kind: VertexKind, counts: dict[str, float]) -> list[tuple[int, float]]:
        return [(index[(kind, key)], w) for key, w in _normalized(counts)]

    edges = []
    for user, counts in by_user.items():
        edges.append((EdgeKind.USER_TRACK, index[(VertexKind.USER, user)], members(VertexKind.TRACK, counts)))
    for track, counts in tagged:
        edges.append((EdgeKind.TAG_TRACK, index[(VertexKind.TRACK, track)], members(VertexKind.TAG, counts)))
    if EdgeKind.ALBUM_TRACK in enabled:
        for album, counts in album_tracks.items():
            edges.append((EdgeKind.ALBUM_TRACK, index[(VertexKind.ALBUM, album)], members(VertexKind.TRACK, counts)))
    if EdgeKind.ARTIST_TRACK in enabled:
        for artist, counts in artist_tracks.items():
            edges.append((EdgeKind.ARTIST_TRACK, index[(VertexKind.ARTIST, artist)], members(VertexKind.TRACK, counts)))
    return Hypergraph(vertices, edges)


def incidence_matrix(g: Hypergraph) -> sparse.coo_matrix:
    """Binary |V| x |E| vertex-edge incidence matrix in COO form."""
    rows, cols = [], []
    for j, e in enumerate(g.edges):
        for v in e.vertices():
            rows.append(v.index)
            cols.append(j)
    data = np.ones(len(rows), dtype=np.int8)
    return sparse.coo_matrix((data, (rows, cols)), shape=(len(g.vertices), len(g.edges)))


def vertex_degree(g: Hypergraph, v: VertexId) -> float:
    """Sum of ``v``'s in-edge weights over its incident edges (hub counts 1)."""
    g._check_vertex(v)
    return float(sum(g.edges[j].weight_of(v) for j in g.adjacency[v.index]))


def hyperedge_degree(g: Hypergraph, e: int) -> int:
    return g._check_edge(e).degree
