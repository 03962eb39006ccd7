"""Score a predicted hierarchy against ground truth by hand-built example.

The prediction keeps all leaves but merges two groups into one, so leaf
edges partly survive while the container structure does not.
"""
from screenparse.core import BoundingBox, Element, build_tree
from screenparse.metrics import bin_by_complexity, evaluate_tree
from screenparse.pipeline import evaluate_detector_oracle
from screenparse.synth import NoiseConfig, SynthConfig, generate_corpus

els = [Element(x, "Text", BoundingBox(100 * i, 0, 100 * i + 80, 80)) for i, x in enumerate("abcd")]
gt = build_tree("R", {"R": ["G1", "G2"], "G1": ["a", "b"], "G2": ["c", "d"]}, "abcd")
pred = build_tree("r", {"r": ["P1", "d"], "P1": ["a", "b", "c"]}, "abcd")

rec = evaluate_tree("demo", els, gt, els, pred)
print(f"edge F1 {rec.f1:.3f}  leaf-edge F1 {rec.f1_leaves:.3f}  GED <= {rec.ged:.0f}  "
      f"container match {rec.cm:.3f}")

# nothing overlaps: every score falls back to its no-match value
far = [Element("z", "Text", BoundingBox(900, 900, 990, 990))]
rec = evaluate_tree("miss", els, gt, far, build_tree("p", {"p": ["z"]}, ["z"]))
print(f"no overlap:  F1 {rec.f1}  GED {rec.ged} (= edges in truth)  CM {rec.cm}")

# detector noise against the best tree any parser could build from the same detections
screens = []
for i, (lo, hi) in enumerate([(8, 32), (33, 64), (65, 100)]):
    screens += generate_corpus(SynthConfig(seed=50 + i, min_elements=lo, max_elements=hi), 20)
for drop in (0.0, 0.1, 0.3):
    rep = evaluate_detector_oracle(screens, NoiseConfig(jitter_sigma=0.05 if drop else 0.0,
                                                        drop_prob=drop, seed=1))
    bins = "  ".join(f"{b.label}: {b.mean_f1:.3f}" for b in bin_by_complexity(rep, (32, 64)))
    print(f"drop {drop:.1f}  {bins}")
