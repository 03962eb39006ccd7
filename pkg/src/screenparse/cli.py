"""Command-line front end.

A corpus directory holds ``manifest.json`` plus one ``screens/<id>.json`` per
screen.  Every command writes into ``--out`` and stamps its outputs with the
seed and a digest of the resolved options.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .core import Screen, load_screen, save_screen
from .synth import NoiseConfig, SynthConfig, generate_corpus, split_corpus

log = logging.getLogger("screenparse")

SPLITS = ("train", "val", "test")


class CliError(Exception):
    pass


# -- option plumbing ------------------------------------------------------------

def config_digest(options: dict) -> str:
    blob = json.dumps(options, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _options(args: argparse.Namespace) -> dict:
    skip = {"func", "config", "out", "workers"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _stamp(args) -> dict:
    opts = _options(args)
    return {"seed": args.seed, "config_digest": config_digest(opts), "version": __version__}


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _noise(args) -> NoiseConfig | None:
    if not getattr(args, "noise", None):
        return None
    parts = [float(x) for x in args.noise.split(",")]
    if len(parts) != 3:
        raise CliError("--noise takes jitter,drop,confusion")
    return NoiseConfig(*parts, seed=args.seed)


def _map(fn, items, workers):
    from .pipeline import _ordered_map
    return _ordered_map(fn, items, workers)


# -- corpus access ----------------------------------------------------------------

def load_manifest(corpus: Path) -> dict:
    path = Path(corpus) / "manifest.json"
    if not path.is_file():
        raise CliError(f"no corpus manifest at {path}")
    return json.loads(path.read_text())


def load_split(corpus: Path, split: str | None) -> list[Screen]:
    manifest = load_manifest(corpus)
    ids = manifest["screens"] if split in (None, "all") else manifest["splits"][split]
    return [load_screen(Path(corpus) / "screens" / f"{sid}.json") for sid in ids]


def select(screens: list[Screen], wanted: Sequence[str] | None) -> list[Screen]:
    if not wanted:
        return screens
    by_id = {s.screen_id: s for s in screens}
    missing = [w for w in wanted if w not in by_id]
    if missing:
        raise CliError(f"unknown screen id(s): {', '.join(missing)}")
    return [by_id[w] for w in wanted]


def _policy(path):
    from .policy import load_policy
    from .weights import WeightFormatError
    try:
        return load_policy(path)
    except (OSError, WeightFormatError, ValueError, KeyError, RuntimeError) as exc:
        raise CliError(f"cannot load parser weights {path}: {exc}") from exc


def _hierarchy_source(args):
    """Parser when weights are given, otherwise the annotated hierarchy."""
    if getattr(args, "weights", None):
        from .policy import greedy_decode
        model = _policy(args.weights)
        return lambda s: greedy_decode(s, model)[0]
    return lambda s: s.ground_truth


# -- commands ------------------------------------------------------------------------

def cmd_synth(args) -> None:
    if args.screens < 1:
        raise CliError("--screens must be positive")
    fractions = tuple(args.split)
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise CliError("--split needs three non-negative fractions summing to 1")
    config = SynthConfig(seed=args.seed, min_elements=args.min_elements,
                         max_elements=args.max_elements, max_depth=args.max_depth)
    screens = generate_corpus(config, args.screens)
    parts = split_corpus(screens, args.seed, fractions)
    out = Path(args.out)
    for s in screens:
        save_screen(s, out / "screens" / f"{s.screen_id}.json")
    _write_json(out / "manifest.json", {
        **_stamp(args),
        "screens": [s.screen_id for s in screens],
        "splits": {name: [s.screen_id for s in part] for name, part in zip(SPLITS, parts)},
        "fractions": list(fractions),
    })
    print(f"wrote {len(screens)} screens to {out} "
          f"({' / '.join(str(len(p)) for p in parts)})")


def _log_csv(rows: list[dict], stamp: dict) -> str:
    buf = io.StringIO()
    if rows:
        fields = list(rows[0]) + ["seed", "config_digest"]
        w = csv.DictWriter(buf, fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({**r, "seconds": f"{r.get('seconds', 0):.3f}", **{
                "seed": stamp["seed"], "config_digest": stamp["config_digest"]}})
    return buf.getvalue()


def cmd_train(args) -> None:
    from .policy import PolicyConfig, TrainConfig, save_policy, train
    tr, va = load_split(args.corpus, "train"), load_split(args.corpus, "val")
    if args.val_limit:
        va = va[:args.val_limit]
    stamp = _stamp(args)
    result = train(tr, va, args.oracle, PolicyConfig(hidden=args.hidden, dropout=args.dropout),
                   TrainConfig(lr=args.lr, max_epochs=args.epochs, patience=args.patience,
                               accumulate=args.accumulate, seed=args.seed),
                   progress=lambda r: log.info("epoch %d train %.4f val %.4f", r["epoch"],
                                               r["train_loss"], r["val_loss"]))
    out = Path(args.out)
    weights = out / f"policy_{args.oracle}.spwt"
    out.mkdir(parents=True, exist_ok=True)
    save_policy(weights, result.model, args.seed, {"oracle": args.oracle, **stamp})
    rows = [{k: v for k, v in r.items() if k != "seconds"} | {"seconds": 0.0}
            for r in result.log] if args.no_timing else result.log
    _write_text(out / f"train_log_{args.oracle}.csv", _log_csv(rows, stamp))
    print(f"wrote {weights} ({len(result.log)} epochs, {result.excluded} screens excluded "
          f"for size)")


def cmd_train_groups(args) -> None:
    from .grouplabel import (AMP, RICO, GroupLabelerConfig, GroupLabelSet, GroupTrainConfig,
                             group_examples, save_group_labeler, train_group_labeler)
    sets = {"amp": AMP, "rico": RICO}
    labelset = sets.get(args.labels.lower()) or GroupLabelSet(
        tuple(l.strip() for l in args.labels.split(",") if l.strip()))
    tr = group_examples(load_split(args.corpus, "train"))
    va = group_examples(load_split(args.corpus, "val"))
    stamp = _stamp(args)
    try:
        result = train_group_labeler(
            tr, va, GroupLabelerConfig(hidden=args.hidden, labels=labelset.labels),
            GroupTrainConfig(lr=args.lr, max_epochs=args.epochs, patience=args.patience,
                             seed=args.seed))
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_group_labeler(out / "grouplabeler.spwt", result.model, args.seed)
    _write_text(out / "train_groups_log.csv", _log_csv(result.log, stamp))
    print(f"validation F1-macro {result.val_f1:.4f}")


def _parse_one(parse, noise):
    from .pipeline import detections

    def one(s: Screen) -> Screen:
        det, _ = detections(s, noise)
        return Screen(det.screen_id, det.width, det.height, det.elements, parse(det))
    return one


def cmd_parse(args) -> None:
    from .policy import greedy_decode
    model = _policy(args.weights)
    screens = select(load_split(args.corpus, args.split), args.screen)
    parsed = _map(_parse_one(lambda s: greedy_decode(s, model)[0], _noise(args)), screens,
                  args.workers)
    out = Path(args.out)
    for p in parsed:
        save_screen(p, out / "parsed" / f"{p.screen_id}.json")
    _write_json(out / "parsed" / "index.json", {**_stamp(args),
                                                 "screens": [p.screen_id for p in parsed]})
    print(f"parsed {len(parsed)} screens into {out / 'parsed'}")


def cmd_eval(args) -> None:
    from .metrics import EvalReport, evaluate_tree
    from .pipeline import evaluate_detector_oracle, evaluate_model
    screens = select(load_split(args.corpus, args.split), args.screen)
    noise = _noise(args)
    reports: list[EvalReport] = []
    if args.predictions:
        pred_dir = Path(args.predictions)
        records = []
        for s in screens:
            path = pred_dir / f"{s.screen_id}.json"
            if not path.is_file():
                raise CliError(f"no prediction for {s.screen_id} in {pred_dir}")
            p = load_screen(path)
            records.append(evaluate_tree(s.screen_id, s.elements, s.ground_truth,
                                         p.elements, p.ground_truth))
        reports.append(EvalReport(records, "predictions"))
    if args.weights:
        reports.append(evaluate_model(_policy(args.weights), screens, noise,
                                      Path(args.weights).stem, args.workers))
    if args.baseline == "detector-oracle":
        reports.append(evaluate_detector_oracle(screens, noise, workers=args.workers))
    if not reports:
        raise CliError("nothing to evaluate: pass --weights, --predictions or --baseline")
    out = Path(args.out)
    stamp = _stamp(args)
    for rep in reports:
        rep.meta = {**stamp, "noise": args.noise or "none", "split": args.split}
        _write_text(out / f"report_{rep.name}.json", rep.to_json(args.bins) + "\n")
        _write_text(out / f"report_{rep.name}.csv", rep.to_csv(args.bins))
        agg = rep.aggregate()
        print(f"{rep.name:>20s}  " + "  ".join(f"{m}={agg[m][0]:.4f}" for m in agg))


def cmd_label(args) -> None:
    from .grouplabel import label_tree, load_group_labeler
    from .weights import WeightFormatError
    try:
        labeler = load_group_labeler(args.group_weights)
    except (OSError, WeightFormatError, ValueError, KeyError, RuntimeError) as exc:
        raise CliError(f"cannot load group labeler {args.group_weights}: {exc}") from exc
    screens = select(load_split(args.corpus, args.split), args.screen)
    hierarchy = _hierarchy_source(args)

    def one(s):
        tree = label_tree(hierarchy(s), s, labeler)
        return Screen(s.screen_id, s.width, s.height, s.elements, tree)
    out = Path(args.out)
    for labeled in _map(one, screens, args.workers):
        save_screen(labeled, out / "labeled" / f"{labeled.screen_id}.json")
    print(f"labeled {len(screens)} screens")


def cmd_navorder(args) -> None:
    from .apps import navigation_order
    screens = select(load_split(args.corpus, args.split), args.screen)
    hierarchy = _hierarchy_source(args)
    stamp = _stamp(args)
    orders = _map(lambda s: navigation_order(hierarchy(s), s, not args.ungrouped), screens,
                  args.workers)
    out = Path(args.out)
    for s, order in zip(screens, orders):
        _write_json(out / "navorder" / f"{s.screen_id}.json",
                    {**stamp, "screen_id": s.screen_id, **order.to_dict()})
    print(f"wrote {len(orders)} navigation orders")


def cmd_codegen(args) -> None:
    from .apps import PHONE, WATCH, generate_code
    target = {"phone": PHONE, "watch": WATCH}[args.target]
    screens = select(load_split(args.corpus, args.split), args.screen)
    hierarchy = _hierarchy_source(args)
    stamp = _stamp(args)
    docs = _map(lambda s: generate_code(hierarchy(s), s, target, args.theme_luminance),
                screens, args.workers)
    out = Path(args.out)
    for s, doc in zip(screens, docs):
        header = f"// seed: {stamp['seed']}  config: {stamp['config_digest']}\n"
        _write_text(out / "code" / f"{s.screen_id}.ui", header + doc.text)
        _write_json(out / "code" / f"{s.screen_id}.assets.json", {**stamp, "assets": doc.assets})
    print(f"wrote {len(docs)} code documents for {target}")


def _embeddings(args):
    from .policy import screen_embedding
    model = _policy(args.weights)
    screens = load_split(args.corpus, args.split)
    vecs = _map(lambda s: screen_embedding(s, model), screens, args.workers)
    return screens, model, {s.screen_id: v for s, v in zip(screens, vecs)}


def cmd_embed(args) -> None:
    screens, _, emb = _embeddings(args)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    dim = len(next(iter(emb.values())))
    w.writerow(["screen_id", *(f"v{i}" for i in range(dim))])
    for sid, v in emb.items():
        w.writerow([sid, *(repr(float(x)) for x in v)])
    stamp = _stamp(args)
    out = Path(args.out)
    _write_text(out / "embeddings.csv", buf.getvalue())
    _write_json(out / "embeddings.meta.json", {**stamp, "count": len(emb), "dim": dim})
    print(f"wrote {len(emb)} embeddings of size {dim}")


def cmd_search(args) -> None:
    from .apps import rank
    screens, _, emb = _embeddings(args)
    if args.query not in emb:
        raise CliError(f"unknown screen id: {args.query}")
    hits = rank(emb[args.query], emb, args.k)
    _write_json(Path(args.out) / "search.json", {
        **_stamp(args), "query": args.query,
        "results": [{"screen_id": h.screen_id, "similarity": h.similarity} for h in hits]})
    for i, h in enumerate(hits, 1):
        print(f"{i:3d}  {h.screen_id}  {h.similarity:.6f}")


# -- parser construction ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    def global_flags(parser, suppress):
        # subcommands repeat the flags without defaults so they cannot clobber
        # values given before the subcommand name
        d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        parser.add_argument("--config", default=d(None), help="JSON file of option defaults")
        parser.add_argument("--seed", type=int, default=d(0))
        parser.add_argument("--workers", type=int, default=d(1))
        parser.add_argument("--out", default=d("out"))
        return parser

    common = global_flags(argparse.ArgumentParser(add_help=False), suppress=True)
    p = global_flags(argparse.ArgumentParser(prog="screenparse",
                                             description="UI hierarchy parsing toolkit"),
                     suppress=False)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, func, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=func)
        return sp

    def corpus_opts(sp, split="test"):
        sp.add_argument("--corpus", required=True, type=Path)
        sp.add_argument("--split", default=split, choices=[*SPLITS, "all"])
        sp.add_argument("--screen", action="append", help="restrict to this screen id")

    sp = command("synth", cmd_synth, "generate a synthetic labeled corpus")
    sp.add_argument("--screens", type=int, default=1000)
    sp.add_argument("--min-elements", type=int, default=4)
    sp.add_argument("--max-elements", type=int, default=96)
    sp.add_argument("--max-depth", type=int, default=4)
    sp.add_argument("--split", type=float, nargs=3, default=[0.70, 0.15, 0.15])

    sp = command("train", cmd_train, "train a hierarchy parser")
    sp.add_argument("--corpus", required=True, type=Path)
    sp.add_argument("--oracle", choices=["static", "dynamic"], default="dynamic")
    sp.add_argument("--hidden", type=int, default=256)
    sp.add_argument("--dropout", type=float, default=0.25)
    sp.add_argument("--lr", type=float, default=1e-4)
    sp.add_argument("--epochs", type=int, default=200)
    sp.add_argument("--patience", type=int, default=10)
    sp.add_argument("--accumulate", type=int, default=1, help="screens per optimizer step")
    sp.add_argument("--val-limit", type=int, default=0, help="use only this many val screens")
    sp.add_argument("--no-timing", action="store_true", help="zero the seconds column")

    sp = command("train-groups", cmd_train_groups, "train the container labeler")
    sp.add_argument("--corpus", required=True, type=Path)
    sp.add_argument("--labels", default="amp", help="amp, rico or a comma-separated list")
    sp.add_argument("--hidden", type=int, default=256)
    sp.add_argument("--lr", type=float, default=1e-4)
    sp.add_argument("--epochs", type=int, default=300)
    sp.add_argument("--patience", type=int, default=10)

    sp = command("parse", cmd_parse, "predict hierarchies with a trained parser")
    corpus_opts(sp)
    sp.add_argument("--weights", required=True)
    sp.add_argument("--noise", help="jitter,drop,confusion applied to detections")

    sp = command("eval", cmd_eval, "score parsers and baselines against ground truth")
    corpus_opts(sp)
    sp.add_argument("--weights")
    sp.add_argument("--predictions", help="directory written by the parse command")
    sp.add_argument("--noise", help="jitter,drop,confusion applied to detections")
    sp.add_argument("--baseline", choices=["detector-oracle"])
    sp.add_argument("--bins", type=int, nargs="+", default=[32, 64])

    sp = command("label", cmd_label, "attach group labels to containers")
    corpus_opts(sp)
    sp.add_argument("--group-weights", required=True)
    sp.add_argument("--weights", help="parse first with these weights")

    sp = command("navorder", cmd_navorder, "screen reader navigation order")
    corpus_opts(sp)
    sp.add_argument("--weights", help="parse first with these weights")
    sp.add_argument("--ungrouped", action="store_true")

    sp = command("codegen", cmd_codegen, "emit declarative UI code")
    corpus_opts(sp)
    sp.add_argument("--weights", help="parse first with these weights")
    sp.add_argument("--target", choices=["phone", "watch"], default="phone")
    sp.add_argument("--theme-luminance", type=float)

    sp = command("embed", cmd_embed, "write screen embeddings as CSV")
    corpus_opts(sp, split="all")
    sp.add_argument("--weights", required=True)

    sp = command("search", cmd_search, "rank screens by embedding similarity")
    corpus_opts(sp, split="all")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--query", required=True)
    sp.add_argument("--k", type=int, default=10)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        defaults = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {args.config}: {exc}") from exc
    if not isinstance(defaults, dict):
        raise CliError("config file must hold a JSON object")
    known = set(vars(args))
    unknown = [k for k in defaults if k.replace("-", "_") not in known]
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(unknown)}")
    # file values become parser defaults, so explicit flags still win
    values = {k.replace("-", "_"): v for k, v in defaults.items()}
    parser.set_defaults(**values)
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            action.choices[args.command].set_defaults(**values)
    return parser.parse_args(argv)


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
        if getattr(args, "corpus", None) is not None:
            args.corpus = Path(args.corpus)
        args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
