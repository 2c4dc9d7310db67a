"""Accuracy and tag-diversity metrics, and the multi-fold report.

All metrics are computed per user on a ranked list of track ids and averaged
over users that have at least one held-out track. Relevance is binary.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .dataset import TagTable

log = logging.getLogger(__name__)

METRICS = ("map", "recall", "hit_ratio", "ndcg", "aggr_div")
DEFAULT_NS = tuple(range(10, 101, 10))


class EvaluationError(RuntimeError):
    def __init__(self, fold: int, cause: BaseException):
        super().__init__(f"fold {fold} failed: {type(cause).__name__}: {cause}")
        self.fold = fold
        self.cause = cause


def _check_n(n: int) -> None:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")


def recall_at_n(recommended: Sequence[str], relevant: Iterable[str], n: int) -> float:
    _check_n(n)
    relevant = set(relevant)
    if not relevant:
        return 0.0
    return len(relevant.intersection(recommended[:n])) / len(relevant)


def hit_ratio_at_n(recommended: Sequence[str], relevant: Iterable[str], n: int) -> float:
    _check_n(n)
    relevant = set(relevant)
    return 1.0 if any(t in relevant for t in recommended[:n]) else 0.0


def map_at_n(recommended: Sequence[str], relevant: Iterable[str], n: int) -> float:
    """Truncated average precision, normalized by ``min(|relevant|, n)``."""
    _check_n(n)
    relevant = set(relevant)
    if not relevant:
        return 0.0
    hits = 0
    total = 0.0
    for p, t in enumerate(recommended[:n], start=1):
        if t in relevant:
            hits += 1
            total += hits / p
    return total / min(len(relevant), n)


def ndcg_at_n(recommended: Sequence[str], relevant: Iterable[str], n: int) -> float:
    """Binary-gain NDCG; the ideal DCG places every relevant track, not just ``n``.

    With the untruncated ideal the value never falls as ``n`` grows.
    """
    _check_n(n)
    relevant = set(relevant)
    if not relevant:
        return 0.0
    dcg = sum(1.0 / math.log2(p + 1) for p, t in enumerate(recommended[:n], start=1) if t in relevant)
    ideal = sum(1.0 / math.log2(p + 1) for p in range(1, len(relevant) + 1))
    return dcg / ideal


def aggr_div_at_n(recommended: Sequence[str], tags: TagTable | Mapping[str, Mapping[str, int]],
                  n: int) -> float:
    """Position-discounted tag diversity of the top ``n`` tracks.

    A tag's score accumulates ``q / log2(1 + j)`` over the listed tracks that
    carry it, where ``q`` is the tag's share of that track's tag counts and
    ``j`` counts how many listed tracks carrying the tag have been seen so
    far (1-based). Tag scores are averaged with weights equal to the number
    of listed tracks carrying the tag. Untagged tracks are ignored; a list
    with no tagged track scores 0.

    Note the value is not bounded by 1: a tag shared by several tracks that
    carry no other tag accumulates more than 1.
    """
    _check_n(n)
    by_track = tags.by_track() if isinstance(tags, TagTable) else tags
    p: dict[str, float] = {}
    occurrences: dict[str, int] = {}
    for track in recommended[:n]:
        counts = by_track.get(track)
        if not counts:
            continue
        total = sum(counts.values())
        for tag, c in counts.items():
            j = occurrences.get(tag, 0) + 1
            occurrences[tag] = j
            p[tag] = p.get(tag, 0.0) + (c / total) / math.log2(1 + j)
    if not occurrences:
        return 0.0
    return sum(p[ta] * occurrences[ta] for ta in occurrences) / sum(occurrences.values())


def user_metrics(recommended: Sequence[str], relevant: Iterable[str], n: int,
                 tags: Mapping[str, Mapping[str, int]]) -> dict[str, float]:
    relevant = set(relevant)
    return {
        "map": map_at_n(recommended, relevant, n),
        "recall": recall_at_n(recommended, relevant, n),
        "hit_ratio": hit_ratio_at_n(recommended, relevant, n),
        "ndcg": ndcg_at_n(recommended, relevant, n),
        "aggr_div": aggr_div_at_n(recommended, tags, n),
    }


def fold_metrics(lists: Mapping[str, Sequence[str]], relevant: Mapping[str, Iterable[str]],
                 ns: Iterable[int], tags: TagTable | Mapping[str, Mapping[str, int]]) -> dict[tuple[str, int], float]:
    """Mean over users of every metric at every ``n``.

    Users with held-out tracks but no list (no embedding) score as empty
    lists, i.e. count as misses.
    """
    by_track = tags.by_track() if isinstance(tags, TagTable) else tags
    users = sorted(u for u, rel in relevant.items() if rel)
    out = {}
    for n in ns:
        sums = dict.fromkeys(METRICS, 0.0)
        for u in users:
            for name, value in user_metrics(list(lists.get(u, ())), relevant[u], n, by_track).items():
                sums[name] += value
        for name in METRICS:
            out[(name, n)] = sums[name] / len(users) if users else 0.0
    return out


@dataclass(frozen=True)
class FoldOutput:
    """What one fold of an end-to-end run hands to the evaluator."""

    lists: Mapping[str, Mapping[str, Sequence[str]]]  # system -> user -> ranked track ids
    relevant: Mapping[str, Iterable[str]]
    tags: TagTable | Mapping[str, Mapping[str, int]]
    metadata: Mapping[str, object] = field(default_factory=dict)


@dataclass
class MetricsReport:
    ns: tuple[int, ...]
    per_fold: dict[tuple[str, int, int], float]
    metadata: dict = field(default_factory=dict)

    @property
    def folds(self) -> list[int]:
        return sorted({f for _, _, f in self.per_fold})

    @property
    def mean(self) -> dict[tuple[str, int], float]:
        folds = self.folds
        return {(m, n): math.fsum(self.per_fold[(m, n, f)] for f in folds) / len(folds)
                for m in METRICS for n in self.ns}

    def value(self, metric: str, n: int, fold: int | None = None) -> float:
        return self.mean[(metric, n)] if fold is None else self.per_fold[(metric, n, fold)]

    def rows(self) -> list[tuple[str, int, str, float]]:
        out = []
        for m in METRICS:
            for n in self.ns:
                for f in self.folds:
                    out.append((m, n, str(f), self.per_fold[(m, n, f)]))
                out.append((m, n, "mean", self.mean[(m, n)]))
        return out

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "n", "fold", "value"])
        for m, n, f, v in self.rows():
            w.writerow([m, n, f, repr(v)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    def to_json(self, path=None) -> str:
        doc = {
            "metadata": self.metadata,
            "ns": list(self.ns),
            "folds": self.folds,
            "mean": {m: {str(n): self.mean[(m, n)] for n in self.ns} for m in METRICS},
            "per_fold": {m: {str(n): [self.per_fold[(m, n, f)] for f in self.folds] for n in self.ns}
                         for m in METRICS},
        }
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


def evaluate_systems(pipeline: Callable[[int], FoldOutput], folds: int | Iterable[int] = 10,
                     ns: Iterable[int] = DEFAULT_NS) -> dict[str, MetricsReport]:
    """Run ``pipeline(fold)`` for each fold and score every system it returns."""
    fold_ids = list(range(folds)) if isinstance(folds, int) else list(folds)
    ns = tuple(sorted(set(ns)))
    for n in ns:
        _check_n(n)
    per_fold: dict[str, dict] = {}
    metadata: dict = {"folds": len(fold_ids)}
    for f in fold_ids:
        try:
            out = pipeline(f)
            for system, lists in out.lists.items():
                for (m, n), v in fold_metrics(lists, out.relevant, ns, out.tags).items():
                    per_fold.setdefault(system, {})[(m, n, f)] = v
        except Exception as exc:
            raise EvaluationError(f, exc) from exc
        for key, value in out.metadata.items():
            metadata.setdefault(key, value)
        log.info("fold %d done", f)
    return {s: MetricsReport(ns, pf, dict(metadata)) for s, pf in per_fold.items()}


def evaluate_folds(pipeline: Callable[[int], FoldOutput], folds: int | Iterable[int] = 10,
                   ns: Iterable[int] = DEFAULT_NS, system: str | None = None) -> MetricsReport:
    """Single-system form of :func:`evaluate_systems`.

    ``system`` picks one when the pipeline returns several; by default the
    first one returned is used.
    """
    reports = evaluate_systems(pipeline, folds, ns)
    if not reports:
        raise ValueError("pipeline returned no recommendation lists")
    return reports[system] if system is not None else next(iter(reports.values()))
