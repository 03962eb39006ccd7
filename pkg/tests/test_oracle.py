import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import optimal_rollout
from helpers import el, screen
from screenparse.core import build_tree, isomorphic
from screenparse.oracle import (GoldTree, OracleError, canonical_action, dynamic_training_step,
                                initial_oracle, optimal_actions, static_oracle, step)
from screenparse.synth import SynthConfig, generate, generate_corpus
from screenparse.transition import (EMIT, POP, apply, arc, extract_tree, initial_state,
                                    legal_actions, replay)


def a_g_bc():
    """root -> {A, G -> {B, C}} with A above G and B left of C."""
    els = [el("A", 0, 0, 100, 10), el("B", 0, 50, 40, 60), el("C", 60, 50, 100, 60)]
    tree = build_tree("root", {"root": ["G", "A"], "G": ["C", "B"]}, ["A", "B", "C"])
    return screen(els, tree)


class TestOptimalActions:
    def test_fresh_state(self):
        s = a_g_bc()
        gold = GoldTree(s.ground_truth, s)
        assert optimal_actions(gold, initial_state(s), initial_oracle(gold)) == {arc("A"), EMIT}

    def test_after_arc_pop(self):
        s = a_g_bc()
        gold = GoldTree(s.ground_truth, s)
        p, o = step(gold, initial_state(s), initial_oracle(gold), arc("A"))
        assert optimal_actions(gold, p, o) == {POP}

    def test_after_emit(self):
        s = a_g_bc()
        gold = GoldTree(s.ground_truth, s)
        p, o = step(gold, initial_state(s), initial_oracle(gold), EMIT)
        assert o.cursor == "G"
        assert optimal_actions(gold, p, o) == {arc("B"), arc("C")}

    def test_misaligned_state_rejected(self):
        s = a_g_bc()
        gold = GoldTree(s.ground_truth, s)
        p = apply(initial_state(s), EMIT)
        with pytest.raises(OracleError):
            optimal_actions(gold, p, initial_oracle(gold))

    def test_unknown_elements_rejected(self):
        s = a_g_bc()
        bad = build_tree("root", {"root": ["A", "Z"]}, ["A", "Z"])
        with pytest.raises(OracleError):
            GoldTree(bad, s)


class TestStaticOracle:
    def test_single_leaf(self):
        s = screen([el("L", 0, 0, 5, 5)], build_tree("r", {"r": ["L"]}, ["L"]))
        assert static_oracle(s.ground_truth, s) == [arc("L")]

    def test_hand_traced(self):
        s = a_g_bc()
        assert static_oracle(s.ground_truth, s) == [arc("A"), POP, EMIT, arc("B"), POP, arc("C")]

    def test_round_trip_synthetic(self):
        for s in generate_corpus(SynthConfig(seed=3, max_elements=64), 200):
            acts = static_oracle(s.ground_truth, s)
            assert isomorphic(extract_tree(replay(s, acts)), s.ground_truth)
            assert acts[-1].is_arc  # no trailing Pops

    def test_every_static_action_is_optimal(self):
        for s in generate_corpus(SynthConfig(seed=4, max_elements=30), 50):
            gold = GoldTree(s.ground_truth, s)
            p, o = initial_state(s), initial_oracle(gold)
            for a in static_oracle(gold):
                assert a in optimal_actions(gold, p, o)
                assert a == canonical_action(gold, p, o)
                p, o = step(gold, p, o, a)


class TestDynamicStep:
    def test_optimal_argmax_executed(self):
        s = a_g_bc()
        gold = GoldTree(s.ground_truth, s)
        p, o = initial_state(s), initial_oracle(gold)
        scores = {a: 0.0 for a in legal_actions(p)}
        scores[arc("A")] = 5.0
        out = dynamic_training_step(gold, p, o, scores, np.random.default_rng(0))
        assert out.executed == arc("A") and out.optimal == {arc("A"), EMIT}

    def test_non_optimal_argmax_replaced_uniformly(self):
        s = a_g_bc()
        gold = GoldTree(s.ground_truth, s)
        p, o = initial_state(s), initial_oracle(gold)
        scores = {a: 0.0 for a in legal_actions(p)}
        scores[arc("C")] = 9.0  # not a child of the root
        rng = np.random.default_rng(12345)
        draws = [dynamic_training_step(gold, p, o, scores, rng).executed for _ in range(10_000)]
        share = draws.count(EMIT) / len(draws)
        assert set(draws) == {arc("A"), EMIT}
        assert abs(share - 0.5) <= 0.02

    def test_executed_action_advances_both(self):
        s = a_g_bc()
        gold = GoldTree(s.ground_truth, s)
        out = dynamic_training_step(gold, initial_state(s), initial_oracle(gold), {EMIT: 1.0},
                                    np.random.default_rng(0))
        assert out.parser.stack[-1].startswith("_c") and out.oracle.cursor == "G"

    def test_terminal_refused(self):
        s = a_g_bc()
        gold = GoldTree(s.ground_truth, s)
        p, o = initial_state(s), initial_oracle(gold)
        for a in static_oracle(gold):
            p, o = step(gold, p, o, a)
        with pytest.raises(OracleError):
            dynamic_training_step(gold, p, o, {}, np.random.default_rng(0))


@given(st.integers(0, 10 ** 6), st.integers(0, 10 ** 6))
def test_random_optimal_rollouts_recover_truth(screen_seed, roll_seed):
    s = generate(SynthConfig(seed=screen_seed, max_elements=64))
    assert isomorphic(optimal_rollout(s, random.Random(roll_seed)), s.ground_truth)
