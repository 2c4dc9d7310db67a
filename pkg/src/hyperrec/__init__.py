"""Music recommendation from random walks over a weighted user/track/album/artist/tag hypergraph."""

from .dataset import (Catalog, CatalogEntry, Dataset, InteractionTable, SplitSpec, TagTable,
                      filter_top_k_per_user, generate_synthetic, split)
from .embedding import EmbeddingConfig, EmbeddingTable, load_embeddings, save_embeddings, train_skipgram
from .evaluation import MetricsReport, evaluate_folds
from .hypergraph import EdgeKind, Hypergraph, VertexKind, build_hypergraph
from .pipeline import PipelineConfig, evaluate
from .ranker import EmbeddingIndex, RankerConfig, RecommendationList, popularity_baseline, recommend
from .walker import WalkConfig, WalkCorpus, generate_walks

__version__ = "0.1.0"

__all__ = [
    "Catalog", "CatalogEntry", "Dataset", "InteractionTable", "SplitSpec", "TagTable",
    "filter_top_k_per_user", "generate_synthetic", "split",
    "EmbeddingConfig", "EmbeddingTable", "load_embeddings", "save_embeddings", "train_skipgram",
    "MetricsReport", "evaluate_folds",
    "EdgeKind", "Hypergraph", "VertexKind", "build_hypergraph",
    "PipelineConfig", "evaluate",
    "EmbeddingIndex", "RankerConfig", "RecommendationList", "popularity_baseline", "recommend",
    "WalkConfig", "WalkCorpus", "generate_walks",
]
