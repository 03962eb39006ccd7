"""Train two small parsers on a synthetic corpus: one imitating the static
oracle, one learning from its own rollouts with the dynamic oracle.

Scaled down to run in a few minutes on one CPU.  Increase SCREENS and
EPOCHS for a steadier comparison (the acceptance suite uses 1,000 screens
and three seeds).
"""
import time

from screenparse.pipeline import evaluate_detector_oracle, evaluate_model
from screenparse.policy import PolicyConfig, TrainConfig, train
from screenparse.synth import NoiseConfig, SynthConfig, generate_corpus, split_corpus

SCREENS, EPOCHS = 300, 6

screens = generate_corpus(SynthConfig(seed=1), SCREENS)
tr, va, te = split_corpus(screens, 0)
print(f"{len(tr)} train / {len(va)} val / {len(te)} test screens")

models = {}
for mode in ("static", "dynamic"):
    t0 = time.time()
    res = train(tr, va, mode, PolicyConfig(hidden=64, dropout=0.1),
                TrainConfig(lr=1e-2, max_epochs=EPOCHS, patience=EPOCHS, accumulate=8),
                progress=lambda r: print(f"  {mode:7s} epoch {r['epoch']:2d}  "
                                         f"train {r['train_loss']:.3f}  val {r['val_loss']:.3f}"))
    models[mode] = res.model
    print(f"  {mode} done in {time.time() - t0:.0f}s")

noise = NoiseConfig(jitter_sigma=0.05, drop_prob=0.1, class_confusion_prob=0.1, seed=3)
print("\n                 F1     F1-leaves  GED     CM")
for name, rep in [("static", evaluate_model(models["static"], te)),
                  ("dynamic", evaluate_model(models["dynamic"], te)),
                  ("oracle+noise", evaluate_detector_oracle(te, noise)),
                  ("dynamic+noise", evaluate_model(models["dynamic"], te, noise))]:
    agg = rep.aggregate()
    print(f"{name:14s}  " + "  ".join(f"{agg[m][0]:.3f}" for m in ("f1", "f1_leaves", "ged", "cm")))
