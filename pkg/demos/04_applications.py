"""Three uses of a parsed hierarchy: screen-reader order, layout code and
similar-screen search.

Uses the ground-truth trees so the output is stable without a trained model;
swap in ``greedy_decode(screen, model)[0]`` for predicted trees.
"""
from screenparse.apps import (PHONE, WATCH, count_stacks, generate_code, navigation_order,
                              similarity_search)
from screenparse.core import Element, Screen
from screenparse.policy import PolicyConfig, new_model
from screenparse.synth import SynthConfig, generate, generate_corpus

s = generate(SynthConfig(seed=12, min_elements=8, max_elements=12))
tree = s.ground_truth

flat = navigation_order(tree, s, group=False)
grouped = navigation_order(tree, s)
print(f"swipes without grouping: {len(flat)}, with grouping: {len(grouped)}")
for stop in grouped.stops:
    print(f"  {stop.swipe_index:2d}  {' + '.join(stop.elements)}")

phone = generate_code(tree, s, PHONE)
watch = generate_code(tree, s, WATCH)
print("\nphone layout:")
print(phone.text)
print("stacks phone", count_stacks(phone), "watch", count_stacks(watch))

# an untrained encoder already ranks an exact rescaled copy first
model = new_model(PolicyConfig(hidden=64), 0).eval()
big = Screen("rescaled", s.width * 2, s.height * 2,
             tuple(Element(e.id, e.class_label, e.bounds.scaled(2.0)) for e in s.elements))
pool = [big, *generate_corpus(SynthConfig(seed=13), 20)]
print("\nnearest screens:")
for hit in similarity_search(s, pool, model, k=3):
    print(f"  {hit.screen_id:10s} {hit.similarity:.4f}")
