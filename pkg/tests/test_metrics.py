import csv
import io
import json
import random

import pytest

from oracles import exact_ged, random_small_tree
from helpers import el, tree_from_nested
from screenparse.core import build_tree, isomorphic
from screenparse.matching import Correspondence, match_containers
from screenparse.metrics import (METRICS, EvalRecord, EvalReport, bin_by_complexity,
                                 container_match, correspond, detector_oracle_tree, edge_f1,
                                 evaluate_tree, ged_upper_bound)
from screenparse.pipeline import evaluate_detector_oracle
from screenparse.synth import NoiseConfig, SynthConfig, generate_corpus

BOXES = {x: el(x, 100 * i, 0, 100 * i + 80, 80) for i, x in enumerate("abcdefgh")}


def elements(tree):
    return [BOXES[x] for x in sorted(tree.leaves())]


def identity(tree, other=None):
    """Leaf identity plus container matching, the way evaluation builds it."""
    other = other or tree
    return correspond(elements(tree), tree, elements(other), other).all


class TestEdgeF1:
    def test_identical(self):
        t = tree_from_nested(["a", ["b", "c"], "d"])
        assert edge_f1(t, t, identity(t)) == 1.0
        assert edge_f1(t, t, identity(t), leaves_only=True) == 1.0

    def test_unmatched_group(self):
        gt = tree_from_nested(["a", "b", "c"])
        pred = tree_from_nested(["a", ["b", "c"]])
        corr = Correspondence((("root", "root", 1.0), ("a", "a", 1.0), ("b", "b", 1.0),
                               ("c", "c", 1.0)))
        assert edge_f1(gt, pred, corr) == pytest.approx(2 / 7)
        # leaf edges: gt {r-a, r-b, r-c}, pred {r-a, g-b, g-c}
        assert edge_f1(gt, pred, corr, leaves_only=True) == pytest.approx(1 / 3)

    def test_no_matches(self):
        t = tree_from_nested(["a", "b"])
        assert edge_f1(t, t, Correspondence(())) == 0.0

    def test_renaming_containers(self):
        gt = tree_from_nested(["a", ["b", "c"], ["d", "e"]])
        renamed = build_tree("top", {"top": ["a", "X", "Y"], "X": ["b", "c"], "Y": ["d", "e"]},
                             "abcde")
        assert edge_f1(gt, renamed, identity(gt, renamed)) == 1.0


class TestGed:
    def test_identical(self):
        t = tree_from_nested(["a", ["b", "c"]])
        assert ged_upper_bound(t, t, identity(t)) == 0

    def test_missing_leaf(self):
        gt = tree_from_nested(["a", "b"])
        pred = tree_from_nested(["a"])
        assert ged_upper_bound(gt, pred, identity(gt, pred)) == 2
        assert exact_ged(gt, pred) == 2

    def test_no_matches(self):
        gt = tree_from_nested(["a", ["b", "c"], "d"])
        assert ged_upper_bound(gt, gt, Correspondence(())) == len(gt.edges()) == 5


class TestContainerMatch:
    def test_perfect(self):
        t = tree_from_nested([["a", "b"], ["c", "d"]])
        m = correspond(elements(t), t, elements(t), t)
        assert container_match(t, t, m.containers) == 1.0

    def test_hand_case(self):
        gt = build_tree("R", {"R": ["G1", "G2"], "G1": ["a", "b"], "G2": ["c", "d"]}, "abcd")
        pred = build_tree("r", {"r": ["P1", "P2"], "P1": ["a", "b", "c"], "P2": ["d"]}, "abcd")
        leaves = Correspondence(tuple((x, x, 1.0) for x in "abcd"))
        cc = match_containers(gt, pred, leaves)
        assert container_match(gt, pred, cc) == pytest.approx(13 / 18)

    def test_no_matches(self):
        t = tree_from_nested([["a", "b"]])
        assert container_match(t, t, Correspondence(())) == 0.0


def test_fallbacks_golden():
    gt = tree_from_nested(["a", ["b", "c"]])
    far = [el("z", 900, 900, 990, 990)]
    pred = build_tree("p", {"p": ["z"]}, ["z"])
    rec = evaluate_tree("s", elements(gt), gt, far, pred)
    assert (rec.f1, rec.f1_leaves, rec.ged, rec.cm) == (0.0, 0.0, 4.0, 0.0)


def test_perfection_agrees():
    for s in generate_corpus(SynthConfig(seed=8), 30):
        rec = evaluate_tree(s.screen_id, s.elements, s.ground_truth, s.elements, s.ground_truth)
        assert (rec.f1, rec.f1_leaves, rec.ged, rec.cm) == (1.0, 1.0, 0.0, 1.0)


def test_ged_bound_against_exhaustive_search():
    rng = random.Random(2024)
    equal = 0
    for _ in range(1000):
        # the no-match fallback is a convention, not a bound, so pairs share a leaf
        gt = random_small_tree(rng, list("abcde"))
        pred = random_small_tree(rng, list("abcde"))
        while not set(gt.leaves()) & set(pred.leaves()):
            pred = random_small_tree(rng, list("abcde"))
        bound = ged_upper_bound(gt, pred, identity(gt, pred))
        exact = exact_ged(gt, pred)
        assert bound >= exact
        equal += bound == exact
    assert equal >= 500


def test_hand_ged_cases_agree_with_search():
    gt = tree_from_nested(["a", ["b", "c"]])
    pred = tree_from_nested(["a", "b", "c"])
    # roots paired: drop the group node and its three edges, add two root edges
    assert ged_upper_bound(gt, pred, identity(gt, pred)) == 6
    # cheaper: drop the old root and its two edges, hang a under the group
    assert exact_ged(gt, pred) == 4


def test_no_match_fallback_is_not_a_bound():
    gt = build_tree("R", {"R": ["C1", "a"], "C1": ["b", "c"]}, "abc")
    pred = build_tree("R", {"R": ["d", "e"]}, "de")
    corr = identity(gt, pred)
    assert not corr.pairs
    assert ged_upper_bound(gt, pred, corr) == len(gt.edges()) == 4 < exact_ged(gt, pred)


class TestBins:
    def report(self):
        recs = [EvalRecord(f"s{i}", n, f1, f1, 0.0, f1) for i, (n, f1) in
                enumerate([(5, 1.0), (7, 0.5), (20, 0.2), (30, 0.4), (200, 0.0)])]
        return EvalReport(recs, "x")

    def test_hand_two_bins(self):
        bins = bin_by_complexity(self.report(), (8, 32))
        assert [(b.label, b.count) for b in bins] == [("1-8", 2), ("9-32", 2), (">32", 1)]
        assert [b.mean_f1 for b in bins] == pytest.approx([0.75, 0.3, 0.0])

    def test_single_bin_equals_overall(self):
        rep = self.report()
        (b,) = bin_by_complexity(rep, (1000,))
        assert b.mean_f1 == pytest.approx(rep.mean("f1"))

    def test_empty_bins_omitted(self):
        labels = [b.label for b in bin_by_complexity(self.report())]
        assert labels == ["1-8", "17-32", ">128"]

    def test_boundaries_inclusive_upper(self):
        rep = EvalReport([EvalRecord("a", 32, 1.0, 1, 0, 1), EvalRecord("b", 33, 0.0, 0, 0, 0)])
        assert [(b.label, b.count) for b in bin_by_complexity(rep, (32, 64))] == \
            [("1-32", 1), ("33-64", 1)]


class TestReportIO:
    def test_csv(self):
        rep = TestBins().report()
        text = rep.to_csv((8, 32))
        assert text == rep.to_csv((8, 32))
        rows = list(csv.reader(io.StringIO(text)))
        assert rows[0] == ["row", "n_elements", *METRICS]
        assert [r[0] for r in rows[-4:]] == ["ALL", "BIN:1-8", "BIN:9-32", "BIN:>32"]
        assert float(rows[-3][2]) == pytest.approx(0.75)

    def test_json_round_trip(self):
        rep = TestBins().report()
        d = json.loads(rep.to_json())
        assert set(d["aggregate"]) == set(METRICS)
        assert EvalReport.from_dict(d).records == rep.records


class TestDetectorOracle:
    def test_no_noise(self):
        screens = generate_corpus(SynthConfig(seed=31), 25)
        rep = evaluate_detector_oracle(screens)
        for r in rep.records:
            assert (r.f1, r.f1_leaves, r.ged, r.cm) == (1.0, 1.0, 0.0, 1.0)
        for s in screens:
            assert isomorphic(detector_oracle_tree(s.ground_truth, s.ground_truth.leaves()),
                              s.ground_truth)

    def test_drop_one_of_three(self):
        gt = tree_from_nested(["x", ["a", "b", "c"]])
        t = detector_oracle_tree(gt, ["x", "a", "b"])
        (g,) = [c for c in t.containers() if c != t.root]
        assert sorted(t.children(g)) == ["a", "b"]

    def test_drop_both_children(self):
        gt = tree_from_nested(["x", "y", ["a", "b"]])
        t = detector_oracle_tree(gt, ["x", "y"])
        assert t.containers() == [t.root] and sorted(t.leaves()) == ["x", "y"]

    def test_renamed_detections(self):
        gt = tree_from_nested(["x", ["a", "b"]])
        t = detector_oracle_tree(gt, {"d0": "x", "d1": "a", "d2": "b"})
        assert sorted(t.leaves()) == ["d0", "d1", "d2"]

    def test_errors(self):
        gt = tree_from_nested(["x", "y"])
        with pytest.raises(ValueError):
            detector_oracle_tree(gt, [])
        with pytest.raises(ValueError):
            detector_oracle_tree(gt, ["q"])

    def test_noise_degrades(self):
        screens = generate_corpus(SynthConfig(seed=32), 40)
        noisy = evaluate_detector_oracle(screens, NoiseConfig(0.05, 0.2, 0.1, seed=1))
        assert noisy.mean("f1") < 1.0 and noisy.mean("ged") > 0
