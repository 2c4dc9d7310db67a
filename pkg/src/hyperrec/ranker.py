"""Scoring and top-n list construction.

Three list builders share one relevance score (user/track dot product, or
cosine when configured):

``relevance_only``
    plain descending relevance.
``literal_diversity``
    at every position pick the candidate with the smallest diversity degree
    ``alpha_i * (1 - rel)``. For any ``alpha_i > 0`` this is a monotone
    rescoring and so reproduces ``relevance_only`` exactly; it is kept so
    that property can be checked.
``mmr_greedy``
    greedy marginal relevance: position ``i`` maximizes
    ``(1 - alpha_i) * rel - alpha_i * max_sim`` where ``max_sim`` is the
    largest cosine between the candidate and the tracks already chosen.

``alpha_i`` is either fixed or the adaptive schedule ``1 - 1/(i + 1)``.
Ties always go to the smaller track id.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .dataset import InteractionTable
from .embedding import EmbeddingTable
from .hypergraph import Hypergraph, VertexKind

log = logging.getLogger(__name__)


class RankMode(str, enum.Enum):
    RELEVANCE_ONLY = "relevance_only"
    LITERAL_DIVERSITY = "literal_diversity"
    MMR_GREEDY = "mmr_greedy"


class ColdUserError(KeyError):
    """The user has no embedding."""


@dataclass(frozen=True)
class RankerConfig:
    n: int = 10
    mode: RankMode = RankMode.MMR_GREEDY
    alpha: float | None = None
    similarity: str = "dot"

    def __post_init__(self):
        object.__setattr__(self, "mode", RankMode(self.mode))
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.alpha is not None and not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"fixed alpha must lie in [0, 1], got {self.alpha}")
        if self.similarity not in ("dot", "cosine"):
            raise ValueError(f"similarity must be 'dot' or 'cosine', got {self.similarity!r}")

    def alpha_at(self, i: int) -> float:
        return adaptive_alpha(i) if self.alpha is None else self.alpha


@dataclass(frozen=True)
class RecommendedItem:
    track_id: str
    relevance: float
    position: int
    score: float


@dataclass(frozen=True)
class RecommendationList:
    user_id: str
    items: tuple[RecommendedItem, ...]
    mode: str

    def __len__(self) -> int:
        return len(self.items)

    @property
    def track_ids(self) -> list[str]:
        return [it.track_id for it in self.items]

    def truncated(self, n: int) -> "RecommendationList":
        return RecommendationList(self.user_id, self.items[:n], self.mode)


def relevance(user_vector, track_vector, similarity: str = "dot") -> float:
    u = np.asarray(user_vector, dtype=np.float64)
    t = np.asarray(track_vector, dtype=np.float64)
    if u.shape != t.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {t.shape}")
    if similarity == "dot":
        return float(u @ t)
    nu, nt = np.linalg.norm(u), np.linalg.norm(t)
    if nu == 0.0 or nt == 0.0:
        log.warning("zero vector in cosine relevance; scoring 0")
        return 0.0
    return float(u @ t / (nu * nt))


def diversity_degree(rel: float, alpha: float) -> float:
    return alpha * (1.0 - rel)


def adaptive_alpha(i: int) -> float:
    """Diversity weight of 1-based list position ``i``."""
    if i < 1:
        raise ValueError(f"position must be >= 1, got {i}")
    return 1.0 - 1.0 / (i + 1)


def _unit_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return np.divide(m, norms, out=np.zeros_like(m), where=norms > 0)


@dataclass
class EmbeddingIndex:
    """User and track vectors looked up by id."""

    users: dict[str, np.ndarray]
    track_ids: list[str]
    tracks: np.ndarray

    def __post_init__(self):
        order = np.argsort(np.array(self.track_ids, dtype=object), kind="stable")
        self.track_ids = [self.track_ids[i] for i in order]
        self.tracks = np.asarray(self.tracks, dtype=np.float64)[order]
        self._pos = {t: i for i, t in enumerate(self.track_ids)}
        self._unit = _unit_rows(self.tracks)

    @classmethod
    def from_graph(cls, g: Hypergraph, table: EmbeddingTable) -> "EmbeddingIndex":
        if len(table) != len(g):
            raise ValueError(f"embedding table has {len(table)} rows, graph has {len(g)} vertices")
        users = {v.key: table.vectors[v.index] for v in g.vertices_of(VertexKind.USER)}
        tracks = g.vertices_of(VertexKind.TRACK)
        matrix = table.vectors[[v.index for v in tracks]] if tracks else np.zeros((0, table.vectors.shape[1]))
        return cls(users, [v.key for v in tracks], matrix)

    def user_vector(self, user: str) -> np.ndarray:
        try:
            return self.users[user]
        except KeyError:
            raise ColdUserError(f"user {user!r} has no embedding") from None

    def positions(self, track_ids: Iterable[str]) -> np.ndarray:
        return np.array(sorted(self._pos[t] for t in track_ids if t in self._pos), dtype=np.int64)


def _relevances(index: EmbeddingIndex, user: str, pos: np.ndarray, similarity: str) -> np.ndarray:
    u = index.user_vector(user)
    if similarity == "dot":
        return index.tracks[pos] @ u
    norm = np.linalg.norm(u)
    if norm == 0.0:
        log.warning("user %r has a zero vector; cosine relevance is 0", user)
        return np.zeros(len(pos))
    return index._unit[pos] @ (u / norm)


def recommend(user: str, index: EmbeddingIndex, candidates: Iterable[str] | None = None,
              exclusions: Iterable[str] = (), config: RankerConfig = RankerConfig()) -> RecommendationList:
    """Build one user's top-``config.n`` list from ``candidates`` minus ``exclusions``.

    ``candidates`` defaults to every embedded track; candidates without an
    embedding are unreachable and dropped.
    """
    excluded = set(exclusions)
    pool = index.track_ids if candidates is None else candidates
    pos = index.positions(t for t in pool if t not in excluded)
    rel = _relevances(index, user, pos, config.similarity)
    n = min(config.n, len(pos))
    if config.mode is RankMode.RELEVANCE_ONLY:
        chosen = np.argsort(-rel, kind="stable")[:n]
        scores = rel[chosen]
    elif config.mode is RankMode.LITERAL_DIVERSITY:
        chosen, scores = _literal(rel, n, config)
    else:
        chosen, scores = _mmr(rel, index._unit[pos], n, config)
    items = tuple(
        RecommendedItem(index.track_ids[pos[c]], float(rel[c]), i + 1, float(sc))
        for i, (c, sc) in enumerate(zip(chosen, scores))
    )
    return RecommendationList(user, items, config.mode.value)


def _literal(rel: np.ndarray, n: int, config: RankerConfig):
    remaining = np.ones(len(rel), dtype=bool)
    ids = np.arange(len(rel))
    chosen, scores = [], []
    for i in range(1, n + 1):
        d = diversity_degree(rel, config.alpha_at(i))
        live = ids[remaining]
        # smallest diversity degree, then highest relevance, then track id
        best = live[np.lexsort((live, -rel[live], d[live]))[0]]
        chosen.append(best)
        scores.append(float(d[best]))
        remaining[best] = False
    return np.array(chosen, dtype=np.int64), scores


def _mmr(rel: np.ndarray, unit: np.ndarray, n: int, config: RankerConfig):
    remaining = np.ones(len(rel), dtype=bool)
    max_sim = np.full(len(rel), -np.inf)  # cosines can be negative; position 1 never reads this
    chosen, scores = [], []
    for i in range(1, n + 1):
        if i == 1:
            score = rel.copy()
        else:
            a = config.alpha_at(i)
            score = (1.0 - a) * rel - a * max_sim
        score[~remaining] = -np.inf
        best = int(np.argmax(score))
        chosen.append(best)
        scores.append(float(score[best]))
        remaining[best] = False
        np.maximum(max_sim, unit @ unit[best], out=max_sim)
    return np.array(chosen, dtype=np.int64), scores


def recommend_all(index: EmbeddingIndex, users: Iterable[str], train: InteractionTable,
                  config: RankerConfig = RankerConfig()) -> dict[str, RecommendationList]:
    """Lists for every embedded user in ``users``; training tracks are excluded."""
    seen = train.by_user()
    out = {}
    for user in users:
        if user not in index.users:
            log.warning("user %r has no embedding; no recommendations", user)
            continue
        out[user] = recommend(user, index, None, seen.get(user, {}), config)
    return out


def popularity_baseline(train: InteractionTable, exclusions: Mapping[str, Iterable[str]],
                        n: int) -> dict[str, RecommendationList]:
    """Most-played tracks overall (ties: ascending id), minus each user's exclusions."""
    totals = train.track_totals()
    ranking = sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))
    out = {}
    for user, excl in exclusions.items():
        excl = set(excl)
        items = []
        for track, count in ranking:
            if track in excl:
                continue
            items.append(RecommendedItem(track, float(count), len(items) + 1, float(count)))
            if len(items) == n:
                break
        out[user] = RecommendationList(user, tuple(items), "popularity")
    return out


def random_baseline(candidates: Iterable[str], exclusions: Mapping[str, Iterable[str]], n: int,
                    seed: int = 0) -> dict[str, RecommendationList]:
    """Uniformly random lists over ``candidates`` minus each user's exclusions."""
    pool = sorted(set(candidates))
    rng = np.random.default_rng(seed)
    out = {}
    for user in sorted(exclusions):
        excl = set(exclusions[user])
        allowed = [t for t in pool if t not in excl]
        picks = rng.permutation(len(allowed))[:n]
        items = tuple(RecommendedItem(allowed[p], 0.0, i + 1, 0.0) for i, p in enumerate(picks))
        out[user] = RecommendationList(user, items, "random")
    return out


def write_recommendations(lists: Iterable[RecommendationList], path) -> None:
    """``user_id<TAB>rank<TAB>track_id<TAB>score`` per slot."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for lst in lists:
            for item in lst.items:
                fh.write(f"{lst.user_id}\t{item.position}\t{item.track_id}\t{item.score!r}\n")


def read_recommendations(path) -> dict[str, list[str]]:
    out: dict[str, list[tuple[int, str]]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            user, rank, track, _ = line.rstrip("\n").split("\t")
            out.setdefault(user, []).append((int(rank), track))
    return {u: [t for _, t in sorted(v)] for u, v in out.items()}
