"""Independent reference implementations shared by unit and acceptance tests.

Each one is written from the definitions with plain loops, never by calling
the code under test.
"""

import math
from collections import Counter

import numpy as np

from hyperrec.hypergraph import EdgeKind, Hypergraph, VertexKind


def aggr_div_oracle(recommended, tags, n):
    """Materialize every (track, tag, j) triple, then apply the weighted average."""
    listed = recommended[:n]
    triples = []
    for tag in sorted({ta for tr in listed for ta in tags.get(tr, {})}):
        carriers = [tr for tr in listed if tags.get(tr, {}).get(tag)]
        for j, tr in enumerate(carriers, start=1):
            q = tags[tr][tag] / sum(tags[tr].values())
            triples.append((tr, tag, j, q / math.log2(1 + j)))
    if not triples:
        return 0.0
    p, d = {}, {}
    for _, tag, _, value in triples:
        p[tag] = p.get(tag, 0.0) + value
        d[tag] = d.get(tag, 0) + 1
    return sum(p[t] * d[t] for t in p) / sum(d.values())


def random_aggr_div_instance(rng):
    """At most 10 tracks and 8 tags; some tracks untagged."""
    n_tracks, n_tags = rng.randint(1, 10), rng.randint(1, 8)
    tracks = [f"t{i}" for i in range(n_tracks)]
    tags = {}
    for t in tracks:
        if rng.random() < 0.8:
            chosen = rng.sample(range(n_tags), rng.randint(1, n_tags))
            tags[t] = {f"g{k}": rng.randint(1, 9) for k in chosen}
    rng.shuffle(tracks)
    return tracks, tags, rng.randint(1, 12)


def numeric_grad(f, x, h=1e-8):
    """Central differences, one coordinate at a time."""
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        up, down = x.copy(), x.copy()
        up[i] += h
        down[i] -= h
        g[i] = (f(up) - f(down)) / (2 * h)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


def gradient_check_draws(rng, count=100):
    # moderate scale keeps sigmoid unsaturated so a 1e-8 step resolves the gradient
    for _ in range(count):
        s, k = int(rng.integers(2, 9)), int(rng.integers(0, 6))
        yield tuple(rng.normal(scale=0.5, size=shape) for shape in (s, s, (k, s)))


def three_edge_graph() -> Hypergraph:
    """Artist a over t1/t2, user u over t1/t3, artist b over t2/t3/t4."""
    U, T, AR = VertexKind.USER, VertexKind.TRACK, VertexKind.ARTIST
    vertices = [(U, "u"), (T, "t1"), (T, "t2"), (T, "t3"), (T, "t4"), (AR, "a"), (AR, "b")]
    edges = [
        (EdgeKind.ARTIST_TRACK, 5, [(1, 0.75), (2, 0.25)]),
        (EdgeKind.USER_TRACK, 0, [(1, 0.4), (3, 0.6)]),
        (EdgeKind.ARTIST_TRACK, 6, [(2, 0.5), (3, 0.3), (4, 0.2)]),
    ]
    return Hypergraph(vertices, edges)


def next_vertex_distribution(g, v, e, stay):
    """Exact P(next vertex | at v in edge e), enumerated from the edge lists."""
    def within(edge):
        weights = {x.index: edge.weight_of(x) for x in edge.vertices() if x.index != v}
        total = sum(weights.values())
        return {x: w / total for x, w in weights.items()}

    out = Counter()
    for x, p in within(g.edges[e]).items():
        out[x] += stay * p
    incident = g.adjacency[v]
    for j in incident:
        for x, p in within(g.edges[j]).items():
            out[x] += (1 - stay) / len(incident) * p
    return out


def shares_an_edge(g):
    """Vertex pairs that co-occur in some edge, built from edge contents only."""
    pairs = set()
    for e in g.edges:
        ids = [v.index for v in e.vertices()]
        pairs.update((a, b) for a in ids for b in ids if a != b)
    return pairs


def expected_edge_counts(train, catalog, tags):
    played = set(train.tracks())
    tagged = tags.by_track()
    return {
        EdgeKind.USER_TRACK: len(train.users()),
        EdgeKind.TAG_TRACK: len(played & set(tagged)),
        EdgeKind.ALBUM_TRACK: len({catalog[t].album for t in played if catalog[t].album}),
        EdgeKind.ARTIST_TRACK: len({catalog[t].artist for t in played}),
    }
