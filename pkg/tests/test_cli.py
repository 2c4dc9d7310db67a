import csv
import json
import subprocess
import sys

import pytest

from hyperrec.cli import ConfigError, Settings, build_parser, exit_code, main, read_config_file, resolve_settings
from hyperrec.evaluation import EvaluationError
from hyperrec.walker import WalkCorpus

SMALL = """\
# tiny but complete run
seed = 3
[synth]
users = 20
tracks = 120
artists = 8
albums = 15
tags = 12
genres = 4
[walk]
r = 2
k = 20
[embedding]
s = 8
epochs = 2
[split]
folds = 2
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "small.cfg").write_text(SMALL)
    assert main(["synth", "--config", str(root / "small.cfg"), "--out", str(root / "data")]) == 0
    return root


def run(workspace, *args):
    return main([args[0], "--config", str(workspace / "small.cfg"), "--data", str(workspace / "data"), *args[1:]])


class TestSettings:
    def test_config_file_sections_and_comments(self, tmp_path):
        (tmp_path / "c.cfg").write_text("seed = 4  # trailing\n[walk]\nk = 9\nembedding.s = 12\n")
        assert read_config_file(tmp_path / "c.cfg") == {"seed": "4", "walk.k": "9", "embedding.s": "12"}

    def test_unknown_key(self, tmp_path):
        (tmp_path / "c.cfg").write_text("walk.kk = 9\n")
        with pytest.raises(ConfigError, match="walk.kk"):
            read_config_file(tmp_path / "c.cfg")

    def test_precedence_flag_over_file_over_env(self, tmp_path):
        (tmp_path / "c.cfg").write_text("threads = 2\nwalk.k = 9\n")
        args = build_parser().parse_args(["walk", "--config", str(tmp_path / "c.cfg"), "--walk-length", "7"])
        s = resolve_settings(args, environ={"HYPERREC_THREADS": "4"})
        assert s["walk.k"] == 7 and s["threads"] == 2
        args = build_parser().parse_args(["walk"])
        assert resolve_settings(args, environ={"HYPERREC_THREADS": "4"})["threads"] == 4
        assert resolve_settings(args, environ={})["walk.k"] == 200

    def test_defaults_match_reference_settings(self):
        cfg = Settings({}).pipeline()
        assert (cfg.walk.r, cfg.walk.k, cfg.walk.stay_probability) == (5, 200, 0.5)
        assert (cfg.embedding.s, cfg.embedding.w, cfg.embedding.negatives, cfg.embedding.epochs) == (50, 5, 5, 5)
        assert cfg.embedding.initial_learning_rate == 0.025
        assert cfg.ns == tuple(range(10, 101, 10)) and cfg.top_k_filter == 200
        assert (cfg.split.train_ratio, cfg.split.folds) == (0.9, 10)
        assert cfg.ranker.mode.value == "mmr_greedy" and cfg.ranker.alpha is None
        assert len(cfg.edges) == 4

    def test_flag_parsing(self):
        args = build_parser().parse_args(["evaluate", "--topn", "5,15", "--alpha", "0.3",
                                          "--disable-edges", "e2,e4", "--k", "3"])
        cfg = resolve_settings(args, environ={}).pipeline()
        assert cfg.ns == (5, 15) and cfg.ranker.alpha == 0.3 and cfg.walk.k == 3
        assert sorted(e.label for e in cfg.edges) == ["e1", "e3"]

    def test_missing_required_key(self, tmp_path, capsys):
        assert main(["build-graph", "--out", str(tmp_path)]) == 1
        assert "missing config key 'data'" in capsys.readouterr().err

    def test_bad_value_names_key(self):
        with pytest.raises(ConfigError, match="walk.k"):
            Settings({"walk.k": "many"})["walk.k"]

    def test_exit_codes(self):
        assert exit_code(ConfigError("x")) == 1
        assert exit_code(FileNotFoundError("x")) == 2
        assert exit_code(RuntimeError("x")) == 3
        assert exit_code(EvaluationError(2, OSError("x"))) == 2


class TestStages:
    def test_synth_files(self, workspace):
        assert {p.name for p in (workspace / "data").iterdir()} >= {"interactions.tsv", "catalog.tsv", "tags.tsv"}

    def test_staged_run(self, workspace):
        out = workspace / "staged"
        assert run(workspace, "build-graph", "--out", str(out)) == 0
        meta = json.loads((out / "graph_meta.json").read_text())
        assert {"train.tsv", "test.tsv", "vertices.tsv", "edges.jsonl"} <= {p.name for p in out.iterdir()}
        assert run(workspace, "walk", "--out", str(out)) == 0
        assert WalkCorpus.load(out / "walks.txt").fingerprint == meta["fingerprint"]
        assert run(workspace, "train", "--out", str(out)) == 0
        assert run(workspace, "recommend", "--out", str(out), "--topn", "5") == 0
        rows = [l.split("\t") for l in (out / "recommendations.tsv").read_text().splitlines()]
        per_user = {}
        for user, rank, track, _ in rows:
            per_user.setdefault(user, []).append(track)
        assert per_user and all(len(v) == 5 for v in per_user.values())
        train = {(l.split("\t")[0], l.split("\t")[1]) for l in (out / "train.tsv").read_text().splitlines()[1:]}
        assert not any((u, t) in train for u, tracks in per_user.items() for t in tracks)
        # later stages rerun from persisted inputs alone
        assert run(workspace, "recommend", "--out", str(out), "--topn", "3", "--mode", "relevance_only") == 0

    def test_stage_order_enforced(self, workspace, capsys):
        out = workspace / "empty"
        assert run(workspace, "walk", "--out", str(out)) == 1
        assert "hyperrec build-graph" in capsys.readouterr().err

    def test_fingerprint_refusal(self, workspace, capsys):
        out = workspace / "stale"
        assert run(workspace, "build-graph", "--out", str(out)) == 0
        assert run(workspace, "walk", "--out", str(out)) == 0
        assert run(workspace, "train", "--out", str(out)) == 0
        # rebuild on a different fold: graph changes, walks and embeddings are now stale
        assert run(workspace, "build-graph", "--out", str(out), "--fold", "1") == 0
        assert run(workspace, "train", "--out", str(out)) == 1
        assert "rerun `hyperrec walk`" in capsys.readouterr().err
        assert run(workspace, "recommend", "--out", str(out)) == 1
        assert "rerun `hyperrec train`" in capsys.readouterr().err

    def test_walk_length_one(self, workspace):
        out = workspace / "k1"
        assert run(workspace, "build-graph", "--out", str(out)) == 0
        assert run(workspace, "walk", "--out", str(out), "--k", "1") == 0
        corpus = WalkCorpus.load(out / "walks.txt")
        assert corpus.walks.shape[1] == 1

    def test_missing_data_is_io_error(self, tmp_path):
        assert main(["build-graph", "--data", str(tmp_path / "nope"), "--out", str(tmp_path)]) == 2

    def test_evaluate_outputs_and_determinism(self, workspace, capsys):
        a, b = workspace / "eval_a", workspace / "eval_b"
        assert run(workspace, "evaluate", "--out", str(a)) == 0
        assert "DWHRec" in capsys.readouterr().out
        assert run(workspace, "evaluate", "--out", str(b)) == 0
        assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
        rows = list(csv.DictReader(open(a / "metrics.csv")))
        assert {r["metric"] for r in rows} == {"map", "recall", "hit_ratio", "ndcg", "aggr_div"}
        assert {int(r["n"]) for r in rows} == set(range(10, 101, 10))
        assert {r["fold"] for r in rows} == {"0", "1", "mean"}
        systems = {r["system"] for r in csv.DictReader(open(a / "comparison.csv"))}
        assert systems == {"DWHRec", "PB", "random"}
        assert json.loads((a / "metrics.json").read_text())["folds"] == [0, 1]

    def test_ablate_rows(self, workspace, capsys):
        out = workspace / "ablate"
        assert run(workspace, "ablate", "--out", str(out), "--folds", "1") == 0
        methods = [r["method"] for r in csv.DictReader(open(out / "ablation.csv"))]
        assert list(dict.fromkeys(methods)) == ["DWHRec", "-e2", "-e3", "-e4"]
        printed = capsys.readouterr().out
        assert all(label in printed for label in ("-e2", "-e3", "-e4"))


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hyperrec.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "ablate" in proc.stdout
