"""Command-line entry point.

Stages persist their outputs under ``--out`` so that each one can be rerun
from the previous stage's files::

    hyperrec synth --out data/
    hyperrec build-graph --data data/ --out run/
    hyperrec walk --out run/
    hyperrec train --out run/
    hyperrec recommend --out run/

``evaluate`` and ``ablate`` run the whole fold loop in memory.

Settings come from built-in defaults, then a flat ``key = value`` file given
with ``--config``, then command-line flags.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .dataset import (Dataset, DatasetError, SplitSpec, filter_top_k_per_user, generate_synthetic,
                      parse_interactions, split, write_interactions)
from .embedding import (EmbeddingConfig, EmbeddingError, load_embeddings, save_embeddings,
                        train_skipgram)
from .evaluation import EvaluationError, MetricsReport
from .hypergraph import ALL_EDGE_KINDS, EdgeKind, GraphError, Hypergraph, VertexKind, build_hypergraph
from .pipeline import POPULARITY, PRIMARY, RANDOM, PipelineConfig, evaluate
from .ranker import EmbeddingIndex, RankerConfig, recommend_all, write_recommendations
from .walker import WalkConfig, WalkCorpus, WalkError, generate_walks

log = logging.getLogger("hyperrec")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_INTERNAL = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


class StageError(ValueError):
    """A staged artifact is missing or belongs to a different graph."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(" ", "").split(",") if x)


def _edge_set(text: str) -> frozenset[EdgeKind]:
    text = text.strip()
    if text.lower() in ("", "none"):
        return frozenset()
    return frozenset(EdgeKind.parse(x.strip()) for x in text.split(","))


def _alpha(text: str) -> float | None:
    return None if text.strip().lower() == "adaptive" else float(text)


def _optional_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none", "off") else float(text)


def _optional_int(text: str) -> int | None:
    return None if text.strip().lower() in ("", "none", "auto") else int(text)


def _kinds(text: str) -> frozenset[VertexKind] | None:
    if text.strip().lower() == "all":
        return None
    labels = {k.label.lower(): k for k in VertexKind}
    try:
        return frozenset(labels[x.strip().lower()] for x in text.split(","))
    except KeyError as exc:
        raise ConfigError(f"unknown vertex kind {exc.args[0]!r}; choose from {sorted(labels)}") from None


# key -> (default, parser); a default of None means the key must be supplied
SCHEMA: dict[str, tuple[str | None, Callable]] = {
    "seed": ("0", int),
    "threads": ("1", int),
    "data": (None, Path),
    "out": ("out", Path),
    "filter.top_k": ("200", int),
    "split.ratio": ("0.9", float),
    "split.folds": ("10", int),
    "split.fold": ("0", int),
    "split.seed": ("", _optional_int),
    "walk.r": ("5", int),
    "walk.k": ("200", int),
    "walk.stay_probability": ("0.5", float),
    "walk.start_kinds": ("all", _kinds),
    "walk.seed": ("", _optional_int),
    "embedding.s": ("50", int),
    "embedding.w": ("5", int),
    "embedding.negatives": ("5", int),
    "embedding.epochs": ("5", int),
    "embedding.lr": ("0.025", float),
    "embedding.subsample": ("none", _optional_float),
    "embedding.workers": ("1", int),
    "embedding.seed": ("", _optional_int),
    "ranker.n": (",".join(str(n) for n in range(10, 101, 10)), _int_list),
    "ranker.mode": ("mmr_greedy", str),
    "ranker.alpha": ("adaptive", _alpha),
    "ranker.similarity": ("dot", str),
    "graph.disable_edges": ("", _edge_set),
    "synth.users": ("50", int),
    "synth.tracks": ("500", int),
    "synth.artists": ("30", int),
    "synth.albums": ("60", int),
    "synth.tags": ("50", int),
    "synth.genres": ("10", _optional_int),
    "synth.interactions_per_user": ("auto", _optional_int),
}


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, ``[section]`` prefixes keys."""
    values: dict[str, str] = {}
    section = ""
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip()
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            key = f"{section}.{key}" if section and "." not in key else key
            if key not in SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = value
    return values


@dataclass
class Settings:
    raw: dict[str, str]

    def __getitem__(self, key: str):
        default, parse = SCHEMA[key]
        text = self.raw.get(key, default)
        if text is None:
            raise ConfigError(f"missing config key {key!r}: set it in the config file or pass the matching flag")
        try:
            return parse(text)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key {key!r}: cannot parse {text!r} ({exc})") from None

    def seed_for(self, key: str) -> int:
        own = self[key]
        return self["seed"] if own is None else own

    def threads(self) -> int:
        n = self["threads"]
        if n < 1:
            raise ConfigError(f"threads must be >= 1, got {n}")
        return n

    def pipeline(self) -> PipelineConfig:
        threads = self.threads()
        ns = self["ranker.n"]
        if not ns:
            raise ConfigError("ranker.n must list at least one list length")
        return PipelineConfig(
            top_k_filter=self["filter.top_k"],
            split=SplitSpec(self["split.ratio"], self["split.fold"], self["split.folds"], self.seed_for("split.seed")),
            walk=WalkConfig(self["walk.r"], self["walk.k"], self["walk.stay_probability"],
                            self.seed_for("walk.seed"), self["walk.start_kinds"]),
            embedding=EmbeddingConfig(self["embedding.s"], self["embedding.w"], self["embedding.negatives"],
                                      self["embedding.epochs"], self["embedding.lr"], self.seed_for("embedding.seed"),
                                      self["embedding.subsample"], min(self["embedding.workers"], threads)),
            ns=ns,
            ranker=RankerConfig(max(ns), self["ranker.mode"], self["ranker.alpha"], self["ranker.similarity"]),
            edges=frozenset(ALL_EDGE_KINDS) - self["graph.disable_edges"],
            threads=threads,
            seed=self["seed"],
        )


# flag dest -> config key
FLAG_KEYS = {
    "seed": "seed", "threads": "threads", "data": "data", "out": "out",
    "iterations": "walk.r", "walk_length": "walk.k", "stay_prob": "walk.stay_probability",
    "dim": "embedding.s", "window": "embedding.w", "epochs": "embedding.epochs",
    "topn": "ranker.n", "mode": "ranker.mode", "alpha": "ranker.alpha", "similarity": "ranker.similarity",
    "disable_edges": "graph.disable_edges", "fold": "split.fold", "folds": "split.folds",
}


def resolve_settings(args: argparse.Namespace, environ=os.environ) -> Settings:
    raw: dict[str, str] = {}
    if environ.get("HYPERREC_THREADS"):
        raw["threads"] = environ["HYPERREC_THREADS"]
    if args.config is not None:
        raw.update(read_config_file(args.config))
    for dest, key in FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            raw[key] = str(value)
    return Settings(raw)


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

GRAPH_META = "graph_meta.json"


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise StageError(f"{path} not found; run `hyperrec {stage}` first")
    return path


def _load_graph(out: Path) -> tuple[Hypergraph, dict]:
    meta = json.loads(_require(out / GRAPH_META, "build-graph").read_text())
    graph = Hypergraph.load(out)
    if graph.fingerprint != meta["fingerprint"]:
        raise StageError(f"graph files in {out} do not match {GRAPH_META} "
                         f"({graph.fingerprint} vs {meta['fingerprint']}); rerun `hyperrec build-graph`")
    return graph, meta


def cmd_synth(s: Settings) -> None:
    out = s["out"]
    tables = generate_synthetic(s["synth.users"], s["synth.tracks"], s["synth.artists"], s["synth.albums"],
                                s["synth.tags"], seed=s["seed"],
                                interactions_per_user=s["synth.interactions_per_user"],
                                n_genres=s["synth.genres"])
    Dataset(*tables).save(out)
    log.info("wrote synthetic dataset to %s", out)


def cmd_build_graph(s: Settings) -> None:
    cfg = s.pipeline()
    ds = Dataset.load(s["data"])
    out = s["out"]
    out.mkdir(parents=True, exist_ok=True)
    train, test = split(filter_top_k_per_user(ds.interactions, cfg.top_k_filter), cfg.split)
    graph = build_hypergraph(train, ds.catalog, ds.tags, cfg.edges)
    write_interactions(train, out / "train.tsv")
    write_interactions(test, out / "test.tsv")
    graph.save(out)
    meta = {
        "fingerprint": graph.fingerprint,
        "vertices": len(graph),
        "edges": {k.label: len(graph.edges_of(k)) for k in EdgeKind},
        "split": dataclasses.asdict(cfg.split),
        "enabled_edges": sorted(k.label for k in cfg.edges),
        "data": str(s["data"]),
    }
    (out / GRAPH_META).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    log.info("graph %s: %d vertices, %d edges", graph.fingerprint, len(graph), graph.n_edges)


def cmd_walk(s: Settings) -> None:
    cfg = s.pipeline()
    out = s["out"]
    graph, _ = _load_graph(out)
    corpus = generate_walks(graph, cfg.walk, threads=cfg.threads)
    corpus.save(out / "walks.txt")
    log.info("wrote %d walks of length %d", len(corpus), cfg.walk.k)


def cmd_train(s: Settings) -> None:
    cfg = s.pipeline()
    out = s["out"]
    graph, _ = _load_graph(out)
    corpus = WalkCorpus.load(_require(out / "walks.txt", "walk"))
    if corpus.fingerprint != graph.fingerprint:
        raise StageError(f"walks.txt was generated on graph {corpus.fingerprint}, current graph is "
                         f"{graph.fingerprint}; rerun `hyperrec walk`")
    table = train_skipgram(corpus, cfg.embedding, n_vertices=len(graph))
    save_embeddings(table, out / "embeddings.bin")
    log.info("trained %dx%d embeddings; final loss %.4f", *table.shape, table.loss_history[-1])


def cmd_recommend(s: Settings) -> None:
    cfg = s.pipeline()
    out = s["out"]
    graph, _ = _load_graph(out)
    path = _require(out / "embeddings.bin", "train")
    try:
        table = load_embeddings(path, expected_fingerprint=graph.fingerprint)
    except EmbeddingError as exc:
        raise StageError(f"{exc}; rerun `hyperrec train`") from None
    train = parse_interactions(_require(out / "train.tsv", "build-graph"))
    test_path = out / "test.tsv"
    users = sorted(parse_interactions(test_path).by_user()) if test_path.exists() else sorted(train.by_user())
    index = EmbeddingIndex.from_graph(graph, table)
    lists = recommend_all(index, users, train, cfg.ranker)
    write_recommendations(lists.values(), out / "recommendations.tsv")
    log.info("wrote top-%d lists for %d users", cfg.ranker.n, len(lists))


def _write_reports(reports: dict[str, MetricsReport], out: Path) -> None:
    reports[PRIMARY].to_csv(out / "metrics.csv")
    reports[PRIMARY].to_json(out / "metrics.json")
    with open(out / "comparison.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("system,metric,n,value\n")
        for system in (PRIMARY, POPULARITY, RANDOM):
            mean = reports[system].mean
            for (metric, n), value in mean.items():
                fh.write(f"{system},{metric},{n},{value!r}\n")


def _load_for_eval(s: Settings) -> Dataset:
    return Dataset.load(s["data"])


def cmd_evaluate(s: Settings) -> None:
    cfg = s.pipeline()
    out = s["out"]
    out.mkdir(parents=True, exist_ok=True)
    reports = evaluate(_load_for_eval(s), cfg)
    _write_reports(reports, out)
    n = 20 if 20 in cfg.ns else cfg.ns[0]
    for system in (PRIMARY, POPULARITY, RANDOM):
        r = reports[system]
        print(f"{system:8s} " + "  ".join(f"{m}@{n}={r.value(m, n):.4f}" for m in ("map", "recall", "hit_ratio",
                                                                                  "ndcg", "aggr_div")))


ABLATIONS = (("DWHRec", frozenset()), ("-e2", frozenset({EdgeKind.TAG_TRACK})),
             ("-e3", frozenset({EdgeKind.ALBUM_TRACK})), ("-e4", frozenset({EdgeKind.ARTIST_TRACK})))


def cmd_ablate(s: Settings) -> None:
    base = s.pipeline()
    out = s["out"]
    out.mkdir(parents=True, exist_ok=True)
    ds = _load_for_eval(s)
    rows = []
    summary = []
    n = 50 if 50 in base.ns else max(base.ns)
    for label, removed in ABLATIONS:
        cfg = dataclasses.replace(base, edges=frozenset(ALL_EDGE_KINDS) - removed)
        report = evaluate(ds, cfg)[PRIMARY]
        for (metric, k), value in report.mean.items():
            rows.append((label, metric, k, value))
        summary.append((label, report.value("recall", n), report.value("aggr_div", n)))
    with open(out / "ablation.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("method,metric,n,value\n")
        for label, metric, k, value in rows:
            fh.write(f"{label},{metric},{k},{value!r}\n")
    print(f"{'method':8s} recall@{n:<4d} aggr_div@{n}")
    for label, rec, div in summary:
        print(f"{label:8s} {rec:.4f}      {div:.4f}")


COMMANDS = {
    "synth": cmd_synth,
    "build-graph": cmd_build_graph,
    "walk": cmd_walk,
    "train": cmd_train,
    "recommend": cmd_recommend,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("settings (override the config file)")
    g.add_argument("--config", type=Path, help="flat key=value settings file")
    g.add_argument("--seed", type=int)
    g.add_argument("--threads", type=int, help="worker cap (fallback: HYPERREC_THREADS)")
    g.add_argument("--data", type=Path, help="dataset directory (interactions.tsv, catalog.tsv, tags.tsv)")
    g.add_argument("--out", type=Path, help="artifact directory")
    g.add_argument("--iterations", "--r", type=int, metavar="R", help="walks per start vertex")
    g.add_argument("--walk-length", "--k", type=int, metavar="K", help="vertices per walk")
    g.add_argument("--stay-prob", type=float, help="probability of keeping the current hyperedge")
    g.add_argument("--dim", type=int, metavar="S", help="embedding dimension")
    g.add_argument("--window", type=int, metavar="W", help="skip-gram window radius")
    g.add_argument("--epochs", type=int)
    g.add_argument("--topn", metavar="N[,N...]", help="list length(s)")
    g.add_argument("--mode", choices=["relevance_only", "literal_diversity", "mmr_greedy"])
    g.add_argument("--alpha", metavar="A|adaptive", help="fixed diversity weight or 'adaptive'")
    g.add_argument("--similarity", choices=["dot", "cosine"])
    g.add_argument("--disable-edges", metavar="e2,e3,e4", help="hyperedge kinds to leave out")
    g.add_argument("--fold", type=int, help="fold used by build-graph")
    g.add_argument("--folds", type=int, help="number of folds")
    g.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="hyperrec", description="Hypergraph random-walk music recommender.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "synth": "write a synthetic dataset",
        "build-graph": "filter, split and build the hypergraph for one fold",
        "walk": "generate the random-walk corpus",
        "train": "train skip-gram embeddings on the corpus",
        "recommend": "write top-n lists for the fold's test users",
        "evaluate": "run every fold end to end and write metrics",
        "ablate": "evaluate with each of e2, e3, e4 removed",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


_VALIDATION_ERRORS = (ConfigError, StageError, DatasetError, GraphError, WalkError, EmbeddingError,
                      ValueError, KeyError)


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, EvaluationError):
        return exit_code(exc.cause)
    if isinstance(exc, _VALIDATION_ERRORS):
        return EXIT_VALIDATION
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_INTERNAL


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = resolve_settings(args)
        COMMANDS[args.command](settings)
    except Exception as exc:  # noqa: BLE001
        code = exit_code(exc)
        label = {EXIT_VALIDATION: "error", EXIT_IO: "I/O error", EXIT_INTERNAL: "internal error"}[code]
        if code == EXIT_INTERNAL:
            log.debug("internal error", exc_info=True)
        print(f"hyperrec: {label}: {exc}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
