import csv
import json
import subprocess
import sys

import pytest

from screenparse.cli import main
from screenparse.core import load_screen
from screenparse.policy import load_policy


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    assert run("synth", "--seed", 7, "--screens", 40, "--max-elements", 20, "--out", out) == 0
    return out


@pytest.fixture(scope="module")
def trained(corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    for oracle in ("static", "dynamic"):
        assert run("train", "--corpus", corpus, "--oracle", oracle, "--hidden", 16,
                   "--lr", 1e-3, "--epochs", 2, "--accumulate", 4, "--no-timing",
                   "--out", out) == 0
    return out


class TestSynth:
    def test_manifest_deterministic(self, tmp_path):
        for name in ("a", "b"):
            assert run("synth", "--seed", 7, "--screens", 100, "--out", tmp_path / name) == 0
        a = (tmp_path / "a" / "manifest.json").read_text()
        assert a == (tmp_path / "b" / "manifest.json").read_text()
        m = json.loads(a)
        assert [len(m["splits"][k]) for k in ("train", "val", "test")] == [70, 15, 15]
        assert m["seed"] == 7 and len(m["config_digest"]) == 16
        sid = m["screens"][0]
        assert (tmp_path / "a" / "screens" / f"{sid}.json").read_bytes() == \
            (tmp_path / "b" / "screens" / f"{sid}.json").read_bytes()

    def test_bad_counts(self, tmp_path, capsys):
        assert run("synth", "--screens", 0, "--out", tmp_path) == 2
        assert "positive" in capsys.readouterr().err
        assert run("synth", "--split", 0.5, 0.5, 0.5, "--out", tmp_path) == 2

    def test_config_file_supplies_defaults(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"screens": 5, "seed": 3}))
        assert run("synth", "--config", cfg, "--out", tmp_path / "c") == 0
        m = json.loads((tmp_path / "c" / "manifest.json").read_text())
        assert len(m["screens"]) == 5 and m["seed"] == 3
        assert run("synth", "--config", cfg, "--screens", 6, "--out", tmp_path / "d") == 0
        assert len(json.loads((tmp_path / "d" / "manifest.json").read_text())["screens"]) == 6


class TestTrain:
    def test_both_oracles_loadable(self, trained):
        for oracle in ("static", "dynamic"):
            model = load_policy(trained / f"policy_{oracle}.spwt")
            assert model.hidden == 16
            rows = list(csv.DictReader(open(trained / f"train_log_{oracle}.csv")))
            assert len(rows) == 2
            assert {"epoch", "train_loss", "val_loss", "seconds", "excluded", "seed",
                    "config_digest"} <= set(rows[0])

    def test_same_seed_same_log(self, corpus, trained, tmp_path):
        assert run("train", "--corpus", corpus, "--oracle", "dynamic", "--hidden", 16,
                   "--lr", 1e-3, "--epochs", 2, "--accumulate", 4, "--no-timing",
                   "--out", tmp_path) == 0
        assert (tmp_path / "train_log_dynamic.csv").read_text() == \
            (trained / "train_log_dynamic.csv").read_text()
        assert (tmp_path / "policy_dynamic.spwt").read_bytes() == \
            (trained / "policy_dynamic.spwt").read_bytes()

    def test_exclusion_logged(self, tmp_path):
        corpus = tmp_path / "big"
        assert run("synth", "--seed", 1, "--screens", 12, "--min-elements", 60,
                   "--max-elements", 70, "--out", corpus) == 0
        m = json.loads((corpus / "manifest.json").read_text())
        big = sum(len(load_screen(corpus / "screens" / f"{s}.json").elements) >= 64
                  for s in m["splits"]["train"])
        assert big > 0
        assert run("train", "--corpus", corpus, "--oracle", "static", "--hidden", 8,
                   "--epochs", 1, "--out", tmp_path / "o") == 0
        rows = list(csv.DictReader(open(tmp_path / "o" / "train_log_static.csv")))
        assert int(rows[0]["excluded"]) == big

    def test_missing_corpus(self, tmp_path):
        assert run("train", "--corpus", tmp_path / "nope", "--out", tmp_path) == 2


class TestEval:
    def test_report_columns(self, corpus, trained, tmp_path):
        w = trained / "policy_dynamic.spwt"
        assert run("eval", "--corpus", corpus, "--weights", w, "--out", tmp_path) == 0
        rep = json.loads((tmp_path / "report_policy_dynamic.json").read_text())
        assert set(rep["aggregate"]) == {"f1", "f1_leaves", "ged", "cm"}
        assert len(rep["records"]) == 6
        rows = list(csv.reader(open(tmp_path / "report_policy_dynamic.csv")))
        assert rows[0] == ["row", "n_elements", "f1", "f1_leaves", "ged", "cm"]
        assert any(r[0] == "ALL" for r in rows)

    def test_detector_oracle_clean(self, corpus, tmp_path):
        assert run("eval", "--corpus", corpus, "--baseline", "detector-oracle",
                   "--out", tmp_path) == 0
        agg = json.loads((tmp_path / "report_detector-oracle.json").read_text())["aggregate"]
        assert (agg["f1"]["mean"], agg["ged"]["mean"], agg["cm"]["mean"]) == (1.0, 0.0, 1.0)

    def test_corrupt_weights(self, corpus, trained, tmp_path):
        bad = tmp_path / "bad.spwt"
        bad.write_bytes((trained / "policy_static.spwt").read_bytes()[:200])
        assert run("eval", "--corpus", corpus, "--weights", bad, "--out", tmp_path) != 0
        assert run("parse", "--corpus", corpus, "--weights", tmp_path / "missing.spwt",
                   "--out", tmp_path) != 0

    def test_parse_then_eval_matches_direct(self, corpus, trained, tmp_path):
        w = trained / "policy_static.spwt"
        assert run("parse", "--corpus", corpus, "--weights", w, "--out", tmp_path) == 0
        assert run("eval", "--corpus", corpus, "--predictions", tmp_path / "parsed",
                   "--weights", w, "--out", tmp_path) == 0
        a = json.loads((tmp_path / "report_predictions.json").read_text())["records"]
        b = json.loads((tmp_path / "report_policy_static.json").read_text())["records"]
        assert a == b

    def test_noisy_eval(self, corpus, tmp_path):
        assert run("eval", "--corpus", corpus, "--baseline", "detector-oracle", "--noise",
                   "0.05,0.2,0.1", "--out", tmp_path) == 0
        agg = json.loads((tmp_path / "report_detector-oracle.json").read_text())["aggregate"]
        assert agg["f1"]["mean"] < 1.0
        assert run("eval", "--corpus", corpus, "--baseline", "detector-oracle", "--noise",
                   "0.1", "--out", tmp_path) == 2

    def test_nothing_to_do(self, corpus, tmp_path):
        assert run("eval", "--corpus", corpus, "--out", tmp_path) == 2


class TestApps:
    def test_navorder_and_codegen(self, corpus, tmp_path):
        m = json.loads((corpus / "manifest.json").read_text())
        sid = m["splits"]["test"][0]
        assert run("navorder", "--corpus", corpus, "--screen", sid, "--out", tmp_path) == 0
        order = json.loads((tmp_path / "navorder" / f"{sid}.json").read_text())
        assert [s["swipe_index"] for s in order["stops"]] == \
            list(range(1, len(order["stops"]) + 1))
        assert run("codegen", "--corpus", corpus, "--target", "watch", "--screen", sid,
                   "--out", tmp_path) == 0
        text = (tmp_path / "code" / f"{sid}.ui").read_text()
        assert "HStack" not in text and "VStack {" in text

    def test_unknown_screen(self, corpus, tmp_path):
        assert run("navorder", "--corpus", corpus, "--screen", "zzz", "--out", tmp_path) == 2

    def test_embed_and_search(self, corpus, trained, tmp_path):
        w = trained / "policy_dynamic.spwt"
        m = json.loads((corpus / "manifest.json").read_text())
        q = m["splits"]["test"][1]
        assert run("embed", "--corpus", corpus, "--weights", w, "--out", tmp_path) == 0
        rows = list(csv.reader(open(tmp_path / "embeddings.csv")))
        assert len(rows) == 41 and len(rows[0]) == 1 + 8
        assert run("search", "--corpus", corpus, "--weights", w, "--query", q, "--k", 3,
                   "--out", tmp_path) == 0
        res = json.loads((tmp_path / "search.json").read_text())["results"]
        assert res[0]["screen_id"] == q and res[0]["similarity"] == pytest.approx(1.0)
        assert run("search", "--corpus", corpus, "--weights", w, "--query", "nope",
                   "--out", tmp_path) == 2

    def test_groups_and_label(self, corpus, tmp_path):
        assert run("train-groups", "--corpus", corpus, "--hidden", 16, "--lr", 1e-3,
                   "--epochs", 3, "--out", tmp_path) == 0
        rows = list(csv.DictReader(open(tmp_path / "train_groups_log.csv")))
        assert len(rows) == 3
        assert run("label", "--corpus", corpus, "--group-weights",
                   tmp_path / "grouplabeler.spwt", "--out", tmp_path) == 0
        labeled = sorted((tmp_path / "labeled").glob("*.json"))
        assert len(labeled) == 6
        tree = load_screen(labeled[0]).ground_truth
        inner = [c for c in tree.containers() if c != tree.root]
        assert all(tree[c].label for c in inner)


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "screenparse", "synth", "--screens", "3",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "manifest.json").is_file()
    proc = subprocess.run([sys.executable, "-m", "screenparse", "--help"], capture_output=True,
                          text=True)
    for cmd in ("synth", "train", "train-groups", "parse", "eval", "label", "navorder",
                "codegen", "embed", "search"):
        assert cmd in proc.stdout
