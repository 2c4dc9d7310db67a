"""End-to-end fold runs: filter, split, build, walk, train, recommend."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field

from .dataset import Dataset, InteractionTable, SplitSpec, filter_top_k_per_user, split
from .embedding import EmbeddingConfig, EmbeddingTable, train_skipgram
from .evaluation import DEFAULT_NS, FoldOutput, MetricsReport, evaluate_systems
from .hypergraph import ALL_EDGE_KINDS, EdgeKind, Hypergraph, build_hypergraph
from .ranker import (EmbeddingIndex, RankerConfig, RankMode, RecommendationList,
                     popularity_baseline, random_baseline, recommend_all)
from .walker import WalkConfig, WalkCorpus, generate_walks

log = logging.getLogger(__name__)

PRIMARY = "DWHRec"
POPULARITY = "PB"
RANDOM = "random"


@dataclass(frozen=True)
class PipelineConfig:
    top_k_filter: int = 200
    split: SplitSpec = SplitSpec()
    walk: WalkConfig = WalkConfig()
    embedding: EmbeddingConfig = EmbeddingConfig()
    ns: tuple[int, ...] = DEFAULT_NS
    ranker: RankerConfig = RankerConfig()
    edges: frozenset[EdgeKind] = frozenset(ALL_EDGE_KINDS)
    threads: int = 1
    seed: int = 0
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.ns or min(self.ns) < 1:
            raise ValueError(f"list lengths must be >= 1, got {self.ns}")
        object.__setattr__(self, "ns", tuple(sorted(set(int(n) for n in self.ns))))
        object.__setattr__(self, "edges", frozenset(EdgeKind(e) for e in self.edges))

    def fold_split(self, fold: int) -> SplitSpec:
        return dataclasses.replace(self.split, fold_index=fold)

    def fold_walk(self, fold: int) -> WalkConfig:
        return dataclasses.replace(self.walk, seed=self.walk.seed + fold)

    def describe(self) -> dict:
        """JSON-safe summary used for report metadata and fingerprints."""
        def plain(obj):
            if dataclasses.is_dataclass(obj):
                return {f.name: plain(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.name != "extra"}
            if isinstance(obj, (set, frozenset)):
                return sorted(plain(x) for x in obj)
            if isinstance(obj, (list, tuple)):
                return [plain(x) for x in obj]
            if isinstance(obj, EdgeKind):
                return obj.label
            if hasattr(obj, "value"):
                return obj.value
            return obj
        return plain(self)

    def fingerprint(self) -> str:
        text = json.dumps(self.describe(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class FoldArtifacts:
    train: InteractionTable
    test: InteractionTable
    graph: Hypergraph
    corpus: WalkCorpus
    embeddings: EmbeddingTable


def prepare(dataset: Dataset, config: PipelineConfig) -> InteractionTable:
    return filter_top_k_per_user(dataset.interactions, config.top_k_filter)


def train_fold(dataset: Dataset, config: PipelineConfig, fold: int,
               interactions: InteractionTable | None = None) -> FoldArtifacts:
    if interactions is None:
        interactions = prepare(dataset, config)
    train, test = split(interactions, config.fold_split(fold))
    graph = build_hypergraph(train, dataset.catalog, dataset.tags, config.edges)
    corpus = generate_walks(graph, config.fold_walk(fold), threads=config.threads)
    emb = dataclasses.replace(config.embedding, workers=max(config.embedding.workers, 1))
    table = train_skipgram(corpus, emb, n_vertices=len(graph))
    return FoldArtifacts(train, test, graph, corpus, table)


def recommend_fold(art: FoldArtifacts, config: PipelineConfig,
                   modes: tuple[RankMode, ...] = ()) -> dict[str, dict[str, RecommendationList]]:
    """Lists of the configured mode under ``DWHRec``, extra modes under their name, and both baselines."""
    n = max(config.ns)
    index = EmbeddingIndex.from_graph(art.graph, art.embeddings)
    users = sorted(art.test.by_user())
    out = {PRIMARY: recommend_all(index, users, art.train, dataclasses.replace(config.ranker, n=n))}
    for mode in modes:
        out[mode.value] = recommend_all(index, users, art.train, dataclasses.replace(config.ranker, n=n, mode=mode))
    seen = art.train.by_user()
    exclusions = {u: seen.get(u, {}) for u in users}
    out[POPULARITY] = popularity_baseline(art.train, exclusions, n)
    out[RANDOM] = random_baseline(index.track_ids, exclusions, n, seed=config.seed)
    return out


def run_fold(dataset: Dataset, config: PipelineConfig, fold: int,
             interactions: InteractionTable | None = None,
             modes: tuple[RankMode, ...] = ()) -> FoldOutput:
    art = train_fold(dataset, config, fold, interactions)
    lists = recommend_fold(art, config, modes)
    relevant = {u: set(tracks) for u, tracks in art.test.by_user().items()}
    return FoldOutput(
        {system: {u: lst.track_ids for u, lst in per_user.items()} for system, per_user in lists.items()},
        relevant,
        dataset.tags,
        {"config_fingerprint": config.fingerprint()},
    )


def evaluate(dataset: Dataset, config: PipelineConfig, folds: int | None = None,
             modes: tuple[RankMode, ...] = ()) -> dict[str, MetricsReport]:
    """Score every system over ``folds`` folds (default: all configured folds)."""
    interactions = prepare(dataset, config)
    n_folds = config.split.folds if folds is None else folds
    reports = evaluate_systems(lambda f: run_fold(dataset, config, f, interactions, modes), n_folds, config.ns)
    for report in reports.values():
        report.metadata["config"] = config.describe()
    return reports
