"""Listening-history ingestion, per-user filtering, fold splits and a
synthetic data generator.

All three input files are tab-separated, UTF-8 and LF-terminated:

* ``interactions.tsv``: ``user  track  play_count``
* ``catalog.tsv``: ``track  artist  album`` (album may be empty)
* ``tags.tsv``: ``track  tag  count``
"""

from __future__ import annotations

import hashlib
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

log = logging.getLogger(__name__)


class DatasetError(ValueError):
    """Base class for invalid dataset contents."""


class ParseError(DatasetError):
    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


class ValidationError(DatasetError):
    pass


@dataclass(frozen=True)
class InteractionTable:
    """User/track play counts, sorted by ``(user, track)`` with unique pairs."""

    rows: tuple[tuple[str, str, int], ...]

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, str, int]]) -> "InteractionTable":
        """Aggregate duplicate pairs by summation and sort."""
        counts: dict[tuple[str, str], int] = defaultdict(int)
        for user, track, count in rows:
            count = int(count)
            if count <= 0:
                raise ValidationError(f"play_count must be >= 1, got {count} for ({user}, {track})")
            counts[(user, track)] += count
        return cls(tuple((u, t, c) for (u, t), c in sorted(counts.items())))

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[tuple[str, str, int]]:
        return iter(self.rows)

    def users(self) -> list[str]:
        return sorted({u for u, _, _ in self.rows})

    def tracks(self) -> list[str]:
        return sorted({t for _, t, _ in self.rows})

    def by_user(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for user, track, count in self.rows:
            out.setdefault(user, {})[track] = count
        return out

    def track_totals(self) -> dict[str, int]:
        totals: dict[str, int] = defaultdict(int)
        for _, track, count in self.rows:
            totals[track] += count
        return dict(totals)


@dataclass(frozen=True)
class CatalogEntry:
    artist: str
    album: str | None = None


@dataclass(frozen=True)
class Catalog:
    entries: dict[str, CatalogEntry] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, track: str) -> bool:
        return track in self.entries

    def __getitem__(self, track: str) -> CatalogEntry:
        return self.entries[track]

    def artists(self) -> list[str]:
        return sorted({e.artist for e in self.entries.values()})

    def albums(self) -> list[str]:
        return sorted({e.album for e in self.entries.values() if e.album is not None})


@dataclass(frozen=True)
class TagTable:
    """Global tag annotation counts per track, sorted by ``(track, tag)``."""

    rows: tuple[tuple[str, str, int], ...]

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, str, int]]) -> "TagTable":
        counts: dict[tuple[str, str], int] = defaultdict(int)
        for track, tag, count in rows:
            count = int(count)
            if count <= 0:
                raise ValidationError(f"tag count must be >= 1, got {count} for ({track}, {tag})")
            counts[(track, tag)] += count
        return cls(tuple((t, g, c) for (t, g), c in sorted(counts.items())))

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[tuple[str, str, int]]:
        return iter(self.rows)

    def tags(self) -> list[str]:
        return sorted({g for _, g, _ in self.rows})

    def by_track(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for track, tag, count in self.rows:
            out.setdefault(track, {})[tag] = count
        return out


@dataclass(frozen=True)
class SplitSpec:
    train_ratio: float = 0.9
    fold_index: int = 0
    folds: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_ratio < 1.0:
            raise ValidationError(f"train_ratio must lie in (0, 1), got {self.train_ratio}")
        if self.folds < 1:
            raise ValidationError(f"folds must be >= 1, got {self.folds}")
        if not 0 <= self.fold_index < self.folds:
            raise ValidationError(f"fold_index must lie in [0, {self.folds}), got {self.fold_index}")


# --------------------------------------------------------------------------
# file I/O
# --------------------------------------------------------------------------


def _read_lines(path) -> Iterator[tuple[int, list[str]]]:
    with open(path, encoding="utf-8", newline="\n") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            yield lineno, line.split("\t")


def _is_int(text: str) -> bool:
    try:
        int(text)
    except ValueError:
        return False
    return True


def _parse_counted(path) -> list[tuple[str, str, int]]:
    rows = []
    for lineno, parts in _read_lines(path):
        if len(parts) != 3:
            raise ParseError(path, lineno, f"expected 3 tab-separated fields, got {len(parts)}")
        a, b, c = parts
        if not _is_int(c):
            # a non-numeric third column on the first line is a header
            if not rows and lineno == 1:
                continue
            raise ParseError(path, lineno, f"count is not an integer: {c!r}")
        count = int(c)
        if count <= 0:
            raise ValidationError(f"{path}:{lineno}: count must be >= 1, got {count}")
        if not a or not b:
            raise ParseError(path, lineno, "empty key")
        rows.append((a, b, count))
    return rows


def parse_interactions(path) -> InteractionTable:
    """Read ``user<TAB>track<TAB>play_count`` lines; duplicate pairs are summed."""
    return InteractionTable.from_rows(_parse_counted(path))


def parse_tags(path) -> TagTable:
    return TagTable.from_rows(_parse_counted(path))


def parse_catalog(path) -> Catalog:
    entries: dict[str, CatalogEntry] = {}
    for lineno, parts in _read_lines(path):
        if len(parts) == 2:
            parts = [*parts, ""]
        if len(parts) != 3:
            raise ParseError(path, lineno, f"expected 3 tab-separated fields, got {len(parts)}")
        track, artist, album = parts
        if lineno == 1 and track in ("track", "track_id"):
            continue
        if not track or not artist:
            raise ParseError(path, lineno, "track and artist are required")
        entry = CatalogEntry(artist, album or None)
        if entries.get(track, entry) != entry:
            raise ValidationError(f"{path}:{lineno}: conflicting catalog entries for track {track!r}")
        entries[track] = entry
    return Catalog(entries)


def write_interactions(table: InteractionTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for user, track, count in table:
            fh.write(f"{user}\t{track}\t{count}\n")


def write_tags(tags: TagTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for track, tag, count in tags:
            fh.write(f"{track}\t{tag}\t{count}\n")


def write_catalog(catalog: Catalog, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for track in sorted(catalog.entries):
            entry = catalog.entries[track]
            fh.write(f"{track}\t{entry.artist}\t{entry.album or ''}\n")


@dataclass(frozen=True)
class Dataset:
    interactions: InteractionTable
    catalog: Catalog
    tags: TagTable

    @classmethod
    def load(cls, directory) -> "Dataset":
        directory = Path(directory)
        return cls(
            parse_interactions(directory / "interactions.tsv"),
            parse_catalog(directory / "catalog.tsv"),
            parse_tags(directory / "tags.tsv"),
        )

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_interactions(self.interactions, directory / "interactions.tsv")
        write_catalog(self.catalog, directory / "catalog.tsv")
        write_tags(self.tags, directory / "tags.tsv")


# --------------------------------------------------------------------------
# filtering and splitting
# --------------------------------------------------------------------------


def filter_top_k_per_user(table: InteractionTable, k: int = 200) -> InteractionTable:
    """Keep each user's ``k`` most-played tracks (ties: ascending track id)."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    kept = []
    for user, tracks in table.by_user().items():
        ranked = sorted(tracks.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
        kept.extend((user, t, c) for t, c in ranked)
    return InteractionTable.from_rows(kept)


def _user_seed(seed: int, user: str) -> list[int]:
    digest = hashlib.blake2b(user.encode("utf-8"), digest_size=8).digest()
    return [seed & 0xFFFFFFFFFFFFFFFF, int.from_bytes(digest, "little")]


def held_out_size(n_tracks: int, train_ratio: float) -> int:
    """Held-out item count for a user with ``n_tracks`` tracks."""
    t = math.floor(n_tracks * (1.0 - train_ratio) + 0.5)
    return min(max(t, 1), n_tracks - 1)


def split(table: InteractionTable, spec: SplitSpec) -> tuple[InteractionTable, InteractionTable]:
    """Per-user random train/test partition for one fold.

    Each user's tracks are shuffled once with an RNG keyed by ``(seed, user)``,
    so every fold sees the same permutation. Fold ``i`` holds out a contiguous
    window of that permutation starting at ``floor(i * n / folds)``; when
    ``folds * test_size == n`` the windows are exactly the cells of a
    partition. Users with a single track cannot be held out: they stay in
    the training table and get no test rows.
    """
    train, test = [], []
    for user, tracks in table.by_user().items():
        items = sorted(tracks.items())
        n = len(items)
        if n < 2:
            log.warning("user %r has %d track(s); kept in train only", user, n)
            train.extend((user, t, c) for t, c in items)
            continue
        order = np.random.default_rng(_user_seed(spec.seed, user)).permutation(n)
        t = held_out_size(n, spec.train_ratio)
        start = (spec.fold_index * n) // spec.folds
        held = {int(order[(start + j) % n]) for j in range(t)}
        for idx, (track, count) in enumerate(items):
            (test if idx in held else train).append((user, track, count))
    return InteractionTable.from_rows(train), InteractionTable.from_rows(test)


# --------------------------------------------------------------------------
# synthetic data
# --------------------------------------------------------------------------


def generate_synthetic(
    n_users: int,
    n_tracks: int,
    n_artists: int,
    n_albums: int,
    n_tags: int,
    seed: int = 0,
    interactions_per_user: int | None = None,
    n_genres: int | None = None,
) -> tuple[InteractionTable, Catalog, TagTable]:
    """Generate a genre-clustered music dataset.

    Artists are split into genres and every genre owns a disjoint slice of
    the tag vocabulary; tracks mostly carry tags from their artist's genre.
    Each user favours one or two genres, so listening histories, track
    metadata and tags share the same cluster structure. Play counts and
    track popularity are heavy-tailed.

    Every requested user, track, artist, album and tag appears in the
    output, and each user has exactly ``interactions_per_user`` rows
    (default ``max(10, ceil(2 * n_tracks / n_users))`` capped at
    ``n_tracks``).
    """
    for name, value in [("n_users", n_users), ("n_tracks", n_tracks), ("n_artists", n_artists),
                        ("n_albums", n_albums), ("n_tags", n_tags)]:
        if value < 1:
            raise ValidationError(f"{name} must be >= 1, got {value}")
    if n_tracks < n_albums:
        raise ValidationError("n_tracks must be >= n_albums")
    if n_tracks < n_artists:
        raise ValidationError("n_tracks must be >= n_artists (every artist needs a track)")
    if n_tags > 5 * n_tracks:
        raise ValidationError("n_tags exceeds 5 tags per track")
    if interactions_per_user is None:
        interactions_per_user = min(n_tracks, max(10, math.ceil(2 * n_tracks / n_users)))
    if not 1 <= interactions_per_user <= n_tracks:
        raise ValidationError("interactions_per_user must lie in [1, n_tracks]")
    if n_users * interactions_per_user < n_tracks:
        raise ValidationError("not enough listening events to cover every track")
    if n_genres is None:
        n_genres = max(1, round(math.sqrt(n_tags)))
    n_genres = max(1, min(n_genres, n_artists, n_tags))

    rng = np.random.default_rng(seed)
    width = len(str(max(n_users, n_tracks, n_artists, n_albums, n_tags)))
    uid = [f"u{i:0{width}d}" for i in range(n_users)]
    tid = [f"t{i:0{width}d}" for i in range(n_tracks)]
    aid = [f"ar{i:0{width}d}" for i in range(n_artists)]
    bid = [f"al{i:0{width}d}" for i in range(n_albums)]
    gid = [f"tag{i:0{width}d}" for i in range(n_tags)]

    artist_genre = np.arange(n_artists) % n_genres
    tag_genre = np.arange(n_tags) % n_genres

    # tracks -> artists: each artist gets one track, the rest follow a heavy tail
    artist_pop = 1.0 / np.arange(1, n_artists + 1) ** 0.8
    artist_pop = artist_pop[rng.permutation(n_artists)]
    track_artist = np.concatenate([
        np.arange(n_artists),
        rng.choice(n_artists, size=n_tracks - n_artists, p=artist_pop / artist_pop.sum()),
    ])
    track_artist = track_artist[rng.permutation(n_tracks)]
    track_genre = artist_genre[track_artist]

    # albums: ~80% of tracks; the first n_albums album-tracks seed the albums
    n_album_tracks = min(n_tracks, max(n_albums, round(0.8 * n_tracks)))
    album_tracks = rng.permutation(n_tracks)[:n_album_tracks]
    track_album = np.full(n_tracks, -1)
    album_artist = np.empty(n_albums, dtype=int)
    artist_albums: dict[int, list[int]] = defaultdict(list)
    for b, t in enumerate(album_tracks[:n_albums]):
        track_album[t] = b
        album_artist[b] = track_artist[t]
        artist_albums[int(track_artist[t])].append(b)
    # fill the quota from tracks whose artist already owns an album
    eligible = [t for t in rng.permutation(n_tracks)
                if track_album[t] < 0 and int(track_artist[t]) in artist_albums]
    for t in eligible[:n_album_tracks - n_albums]:
        choices = artist_albums[int(track_artist[t])]
        track_album[t] = choices[rng.integers(len(choices))]

    entries = {
        tid[t]: CatalogEntry(aid[track_artist[t]], bid[track_album[t]] if track_album[t] >= 0 else None)
        for t in range(n_tracks)
    }

    # tags: 1-5 per track, 85% from the track's genre pool
    genre_tags = [np.flatnonzero(tag_genre == g) for g in range(n_genres)]
    track_tags: list[dict[int, int]] = []
    for t in range(n_tracks):
        want = int(rng.integers(1, 6))
        chosen: dict[int, int] = {}
        pool = genre_tags[track_genre[t]]
        for _ in range(want):
            src = pool if rng.random() < 0.85 else np.arange(n_tags)
            tag = int(src[rng.integers(len(src))])
            chosen[tag] = chosen.get(tag, 0) + int(min(rng.zipf(1.8), 100))
        track_tags.append(chosen)
    used = {g for tags in track_tags for g in tags}
    for tag in range(n_tags):
        if tag in used:
            continue
        same = [t for t in np.flatnonzero(track_genre == tag_genre[tag]) if len(track_tags[t]) < 5]
        anywhere = same or [t for t in range(n_tracks) if len(track_tags[t]) < 5]
        t = anywhere[rng.integers(len(anywhere))]
        track_tags[t][tag] = int(min(rng.zipf(1.8), 100))
    tag_rows = [(tid[t], gid[g], c) for t in range(n_tracks) for g, c in track_tags[t].items()]

    # listening histories
    track_pop = rng.pareto(1.2, size=n_tracks) + 1.0
    histories: list[list[int]] = []
    likes: list[set[int]] = []
    for _ in range(n_users):
        favourites = rng.choice(n_genres, size=min(n_genres, int(rng.integers(1, 3))), replace=False)
        likes.append({int(g) for g in favourites})
        affinity = np.where(np.isin(track_genre, favourites), 1.0, 0.01)
        p = track_pop * affinity
        histories.append(list(rng.choice(n_tracks, size=interactions_per_user, replace=False, p=p / p.sum())))
    listeners = np.zeros(n_tracks, dtype=int)
    for h in histories:
        listeners[h] += 1
    # every track must be played by somebody, preferably a fan of its genre
    for t in np.flatnonzero(listeners == 0):
        order = sorted(rng.permutation(n_users), key=lambda u: track_genre[t] not in likes[u])
        for u in order:
            h = histories[u]
            swappable = [i for i, x in enumerate(h) if listeners[x] >= 2]
            if swappable:
                i = swappable[rng.integers(len(swappable))]
                listeners[h[i]] -= 1
                h[i] = int(t)
                listeners[t] += 1
                break
    rows = []
    for u, h in enumerate(histories):
        for t in h:
            rows.append((uid[u], tid[t], int(min(rng.zipf(1.6), 5000))))

    return InteractionTable.from_rows(rows), Catalog(entries), TagTable.from_rows(tag_rows)
