import itertools
import logging
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hyperrec.dataset import InteractionTable
from hyperrec.ranker import (ColdUserError, EmbeddingIndex, RankerConfig, RankMode, adaptive_alpha,
                             diversity_degree, popularity_baseline, random_baseline, read_recommendations,
                             recommend, recommend_all, relevance, write_recommendations)

REL, LIT, MMR = RankMode.RELEVANCE_ONLY, RankMode.LITERAL_DIVERSITY, RankMode.MMR_GREEDY


def index_of(user_vec, tracks: dict):
    ids = list(tracks)
    return EmbeddingIndex({"u": np.asarray(user_vec, float)}, ids, np.array([tracks[t] for t in ids], float))


def random_index(rng, n_tracks=30, s=6, n_users=1):
    users = {f"u{i}": rng.normal(size=s) for i in range(n_users)}
    ids = [f"t{i:03d}" for i in range(n_tracks)]
    return EmbeddingIndex(users, ids, rng.normal(size=(n_tracks, s)))


def cosine(a, b):
    return sum(x * y for x, y in zip(a, b)) / math.sqrt(sum(x * x for x in a) * sum(y * y for y in b))


def greedy_oracle(user, tracks: dict, n, alpha):
    """Plain-Python greedy marginal relevance; ties to the smaller id."""
    rel = {t: sum(x * y for x, y in zip(user, v)) for t, v in tracks.items()}
    picked = []
    for i in range(1, n + 1):
        best = None
        for t in sorted(tracks):
            if t in picked:
                continue
            if i == 1:
                score = rel[t]
            else:
                a = alpha(i)
                score = (1 - a) * rel[t] - a * max(cosine(tracks[t], tracks[p]) for p in picked)
            if best is None or score > best[0]:
                best = (score, t)
        picked.append(best[1])
    return picked


class TestScores:
    def test_relevance_examples(self):
        assert relevance([1, 0], [1, 0]) == 1.0
        assert relevance([1, 0], [0, 3]) == 0.0
        assert relevance([1, 2], [3, -1]) == 1.0
        assert relevance([2, 0], [5, 0], "cosine") == pytest.approx(1.0)

    def test_cosine_zero_vector_warns(self, caplog):
        with caplog.at_level(logging.WARNING):
            assert relevance([0, 0], [1, 1], "cosine") == 0.0
        assert "zero vector" in caplog.text

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            relevance([1, 2], [1, 2, 3])

    def test_diversity_degree_examples(self):
        assert diversity_degree(1.0, 0.7) == 0.0
        assert diversity_degree(0.3, 0.0) == 0.0
        assert diversity_degree(0.2, 0.5) == pytest.approx(0.4)

    def test_adaptive_alpha(self):
        assert adaptive_alpha(1) == 0.5
        assert adaptive_alpha(9) == pytest.approx(0.9)
        values = [adaptive_alpha(i) for i in range(1, 1000)]
        assert all(a < b for a, b in zip(values, values[1:])) and values[-1] < 1.0
        with pytest.raises(ValueError):
            adaptive_alpha(0)

    def test_config_validation(self):
        for bad in (dict(n=0), dict(alpha=1.5), dict(similarity="l2")):
            with pytest.raises(ValueError):
                RankerConfig(**bad)
        assert RankerConfig(mode="relevance_only").mode is REL

    @given(st.integers(1, 64), st.lists(st.integers(-320, 320), min_size=2, max_size=20, unique=True))
    def test_degree_order_is_reverse_relevance_order(self, a, ks):
        # dyadic grid: every score is exact, so the comparison is exact too
        alpha, rels = a / 64, [k / 64 for k in ks]
        by_degree = sorted(range(len(rels)), key=lambda i: diversity_degree(rels[i], alpha))
        by_rel = sorted(range(len(rels)), key=lambda i: -rels[i])
        assert by_degree == by_rel


class TestRecommend:
    def test_relevance_only_example(self):
        idx = index_of([1.0], {"t1": [0.9], "t2": [0.5]})
        assert recommend("u", idx, config=RankerConfig(n=2, mode=REL)).track_ids == ["t1", "t2"]

    def test_ties_go_to_smaller_id(self):
        idx = index_of([1.0], {"t9": [0.5], "t2": [0.5], "t5": [0.5]})
        for mode in RankMode:
            assert recommend("u", idx, config=RankerConfig(n=3, mode=mode)).track_ids == ["t2", "t5", "t9"]

    def test_mmr_duplicate_direction_example(self):
        tracks = {"t1": [1.0, 0.0], "t2": [0.95, 0.0], "t3": [0.0, 0.9]}
        user = [1.0, 0.9]
        # rel: t1 1.0, t2 0.95, t3 0.81; t2 is parallel to t1
        got = recommend("u", index_of(user, tracks), config=RankerConfig(n=3)).track_ids
        assert got == ["t1", "t3", "t2"]
        assert got == greedy_oracle(user, tracks, 3, adaptive_alpha)
        # the greedy choice at position 2 beats every alternative ordering's
        a = adaptive_alpha(2)
        second = {t: (1 - a) * relevance(user, tracks[t]) - a * cosine(tracks[t], tracks["t1"])
                  for t in ("t2", "t3")}
        assert max(second, key=second.get) == "t3"
        assert recommend("u", index_of(user, tracks), config=RankerConfig(n=3, mode=REL)).track_ids == ["t1", "t2", "t3"]

    @pytest.mark.parametrize("seed", range(25))
    def test_mmr_matches_brute_force_on_six_candidates(self, seed):
        rng = np.random.default_rng(seed)
        user = rng.normal(size=3).tolist()
        tracks = {f"t{i}": rng.normal(size=3).tolist() for i in range(6)}
        for alpha in (adaptive_alpha, lambda i: 0.3, lambda i: 1.0):
            cfg = RankerConfig(n=6, alpha=None if alpha is adaptive_alpha else alpha(1))
            assert recommend("u", index_of(user, tracks), config=cfg).track_ids == greedy_oracle(user, tracks, 6, alpha)

    def test_mmr_with_zero_alpha_is_relevance_order(self):
        rng = np.random.default_rng(5)
        idx = random_index(rng, 40)
        a = recommend("u0", idx, config=RankerConfig(n=40, mode=MMR, alpha=0.0)).track_ids
        b = recommend("u0", idx, config=RankerConfig(n=40, mode=REL)).track_ids
        assert a == b

    def test_literal_equals_relevance_for_100_users(self):
        rng = np.random.default_rng(6)
        idx = random_index(rng, 200, n_users=100)
        for user in idx.users:
            for alpha in (None, 0.4):
                lit = recommend(user, idx, config=RankerConfig(n=50, mode=LIT, alpha=alpha)).track_ids
                rel = recommend(user, idx, config=RankerConfig(n=50, mode=REL)).track_ids
                assert lit == rel

    def test_length_uniqueness_and_exclusions(self):
        rng = np.random.default_rng(7)
        idx = random_index(rng, 12)
        excluded = {"t000", "t003", "t007"}
        for mode in RankMode:
            lst = recommend("u0", idx, exclusions=excluded, config=RankerConfig(n=20, mode=mode))
            ids = lst.track_ids
            assert len(ids) == 9 == len(set(ids))
            assert not excluded & set(ids)
            assert [it.position for it in lst.items] == list(range(1, 10))

    def test_candidates_restrict_pool(self):
        rng = np.random.default_rng(8)
        idx = random_index(rng, 12)
        lst = recommend("u0", idx, candidates=["t001", "t002", "unknown"], config=RankerConfig(n=5))
        assert sorted(lst.track_ids) == ["t001", "t002"]

    def test_mmr_list_is_more_diverse(self):
        def spread(ids, idx):
            vecs = [idx.tracks[idx.positions([t])[0]] for t in ids]
            return np.mean([1 - cosine(a, b) for a, b in itertools.combinations(vecs, 2)])
        for seed in range(20):
            idx = random_index(np.random.default_rng(seed), 60)
            mmr = recommend("u0", idx, config=RankerConfig(n=10, mode=MMR)).track_ids
            rel = recommend("u0", idx, config=RankerConfig(n=10, mode=REL)).track_ids
            assert spread(mmr, idx) >= spread(rel, idx) - 1e-12

    def test_cold_user(self):
        idx = random_index(np.random.default_rng(0), 5)
        with pytest.raises(ColdUserError):
            recommend("nobody", idx)

    def test_cosine_mode_uses_direction_only(self):
        idx = index_of([1.0, 0.0], {"big": [10.0, 10.0], "small": [0.1, 0.0]})
        assert recommend("u", idx, config=RankerConfig(n=2, mode=REL)).track_ids == ["big", "small"]
        assert recommend("u", idx, config=RankerConfig(n=2, mode=REL, similarity="cosine")).track_ids == ["small", "big"]

    def test_recommend_all_excludes_train_and_skips_cold(self, caplog):
        rng = np.random.default_rng(9)
        idx = random_index(rng, 10, n_users=2)
        train = InteractionTable.from_rows([("u0", "t000", 1), ("u0", "t001", 2), ("u1", "t005", 1)])
        with caplog.at_level(logging.WARNING):
            out = recommend_all(idx, ["u0", "u1", "cold"], train, RankerConfig(n=10))
        assert set(out) == {"u0", "u1"}
        assert "cold" in caplog.text
        assert not {"t000", "t001"} & set(out["u0"].track_ids)
        assert len(out["u1"]) == 9


class TestBaselines:
    train = InteractionTable.from_rows([("a", "t1", 6), ("b", "t1", 4), ("a", "t2", 5), ("b", "t3", 1)])

    def test_popularity_order(self):
        out = popularity_baseline(self.train, {"x": set()}, 2)
        assert out["x"].track_ids == ["t1", "t2"]

    def test_popularity_exclusion(self):
        out = popularity_baseline(self.train, {"x": {"t1"}}, 2)
        assert out["x"].track_ids == ["t2", "t3"]

    def test_popularity_is_user_independent(self):
        out = popularity_baseline(self.train, {"x": {"t2"}, "y": {"t2"}}, 3)
        assert out["x"].track_ids == out["y"].track_ids == ["t1", "t3"]

    def test_popularity_ties(self):
        train = InteractionTable.from_rows([("a", "z", 2), ("a", "m", 2), ("a", "b", 1)])
        assert popularity_baseline(train, {"q": set()}, 3)["q"].track_ids == ["m", "z", "b"]

    def test_random_baseline(self):
        pool = [f"t{i}" for i in range(30)]
        a = random_baseline(pool, {"x": {"t0"}, "y": set()}, 10, seed=1)
        b = random_baseline(pool, {"x": {"t0"}, "y": set()}, 10, seed=1)
        assert a["x"].track_ids == b["x"].track_ids
        assert "t0" not in a["x"].track_ids and len(set(a["x"].track_ids)) == 10


def test_recommendations_round_trip(tmp_path):
    idx = random_index(np.random.default_rng(3), 15, n_users=3)
    lists = [recommend(u, idx, config=RankerConfig(n=5)) for u in sorted(idx.users)]
    write_recommendations(lists, tmp_path / "r.tsv")
    back = read_recommendations(tmp_path / "r.tsv")
    assert back == {l.user_id: l.track_ids for l in lists}
    first = (tmp_path / "r.tsv").read_text().splitlines()[0].split("\t")
    assert first[:2] == ["u0", "1"] and len(first) == 4
