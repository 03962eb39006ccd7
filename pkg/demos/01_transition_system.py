"""Walk one small screen through the parser's transition system.

The static oracle turns a ground-truth hierarchy into Arc/Emit/Pop actions.
Replaying them rebuilds the same tree.  A dynamic rollout that picks any
optimal action at each step ends in the same tree too.
"""
import random

from screenparse.core import isomorphic
from screenparse.oracle import GoldTree, initial_oracle, optimal_actions, static_oracle, step
from screenparse.synth import SynthConfig, generate
from screenparse.transition import apply, extract_tree, initial_state, is_terminal


def show(tree, node=None, depth=0):
    node = node or tree.root
    print("  " * depth + node)
    for c in tree.children(node):
        show(tree, c, depth + 1)


s = generate(SynthConfig(seed=4, min_elements=6, max_elements=6, max_depth=3))
print("elements:")
for e in s.elements:
    print(f"  {e.id:6s} {e.class_label:10s} {e.bounds.as_list()}")
print("\nground truth:")
show(s.ground_truth)

actions = static_oracle(s.ground_truth, s)
print(f"\nstatic oracle, {len(actions)} actions:")
state = initial_state(s)
for a in actions:
    state = apply(state, a)
    print(f"  {a.token():14s} stack={list(state.stack)}")

rebuilt = extract_tree(state)
print("\nrebuilt tree matches:", isomorphic(rebuilt, s.ground_truth))

# dynamic rollouts: any optimal action, chosen at random
gold = GoldTree(s.ground_truth, s)
rng = random.Random(0)
ok = 0
for _ in range(50):
    p, o = initial_state(s), initial_oracle(gold)
    while not is_terminal(p):
        p, o = step(gold, p, o, rng.choice(sorted(optimal_actions(gold, p, o), key=str)))
    ok += isomorphic(extract_tree(p), s.ground_truth)
print(f"random optimal rollouts recovering the tree: {ok}/50")
