"""Tree comparison metrics: edge F1, GED upper bound, container match.

All metrics take a correspondence whose left side is the ground truth and
whose right side is the prediction, covering both leaves and containers.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .core import (Element, HierarchyTree, all_descendant_leaves, collapse_containers)
from .matching import (DEFAULT_THRESHOLD, Correspondence, match_containers,
                       match_elements)

METRICS = ("f1", "f1_leaves", "ged", "cm")
DEFAULT_BIN_EDGES = (8, 16, 32, 64, 128)


def _f1(gt_edges: set, pred_edges: set) -> float:
    hit = len(gt_edges & pred_edges)
    if not hit:
        return 0.0
    p, r = hit / len(pred_edges), hit / len(gt_edges)
    return 2 * p * r / (p + r)


def _translated_edges(pred: HierarchyTree, to_gt: Mapping[str, str],
                      leaves_only: bool = False) -> set:
    # unmatched predicted nodes get private names so their edges never match
    name = lambda n: to_gt.get(n, ("pred", n))  # noqa: E731
    return {(name(p), name(c)) for p, c in pred.edges()
            if not leaves_only or pred[c].is_leaf}


def edge_f1(gt: HierarchyTree, pred: HierarchyTree, corr: Correspondence,
            leaves_only: bool = False) -> float:
    if not corr.pairs:
        return 0.0
    gt_edges = {e for e in gt.edges() if not leaves_only or gt[e[1]].is_leaf}
    pred_edges = _translated_edges(pred, corr.right_to_left, leaves_only)
    return _f1(gt_edges, pred_edges)


def _extend_mapping(gt: HierarchyTree, pred: HierarchyTree, corr: Correspondence
                    ) -> dict[str, str]:
    """Pred->gt node map: the correspondence, plus greedy pairing of leftover containers."""
    to_gt = dict(corr.right_to_left)
    used = set(to_gt.values())
    free_g = [g for g in gt.containers() if g not in used]
    free_p = [p for p in pred.containers() if p not in to_gt]
    if free_g and free_p:
        gd = all_descendant_leaves(gt)
        pd = all_descendant_leaves(pred)
        cands = []
        for p in free_p:
            ps = {to_gt.get(x, ("pred", x)) for x in pd[p]}
            for g in free_g:
                gs = gd[g]
                union = len(gs | ps)
                score = len(gs & ps) / union if union else 0.0
                cands.append((-score, g, p))
        cands.sort(key=lambda t: (t[0], repr(t[1]), repr(t[2])))
        taken_g, taken_p = set(), set()
        for _, g, p in cands:
            if g in taken_g or p in taken_p:
                continue
            to_gt[p] = g
            taken_g.add(g)
            taken_p.add(p)
    return to_gt


def edit_cost(gt: HierarchyTree, pred: HierarchyTree, to_gt: Mapping[str, str]) -> int:
    """Unit-cost node/edge insertions and deletions implied by a fixed node map."""
    mapped_g = set(to_gt.values())
    node_cost = sum(1 for n in gt.nodes if n not in mapped_g) + \
        sum(1 for n in pred.nodes if n not in to_gt)
    gt_edges = set(gt.edges())
    pred_edges = {(to_gt.get(p, ("pred", p)), to_gt.get(c, ("pred", c))) for p, c in pred.edges()}
    kept = len(gt_edges & pred_edges)
    return node_cost + (len(gt_edges) - kept) + (len(pred_edges) - kept)


def ged_upper_bound(gt: HierarchyTree, pred: HierarchyTree, corr: Correspondence) -> float:
    if not corr.pairs:
        return float(len(gt.edges()))
    return float(edit_cost(gt, pred, _extend_mapping(gt, pred, corr)))


def container_match(gt: HierarchyTree, pred: HierarchyTree,
                    container_corr: Correspondence) -> float:
    """Mean descendant IoU per ground-truth container (0 where unmatched)."""
    containers = gt.containers()
    if not containers or not container_corr.pairs:
        return 0.0
    scores = container_corr.scores
    return sum(scores.get(g, 0.0) for g in containers) / len(containers)


@dataclass(frozen=True)
class NodeMatch:
    leaves: Correspondence
    containers: Correspondence

    @property
    def all(self) -> Correspondence:
        return self.leaves.merged(self.containers)


def correspond(gt_elements: Sequence[Element], gt: HierarchyTree,
               pred_elements: Sequence[Element], pred: HierarchyTree,
               threshold: float = DEFAULT_THRESHOLD) -> NodeMatch:
    leaves = match_elements(gt_elements, pred_elements, threshold)
    return NodeMatch(leaves, match_containers(gt, pred, leaves, threshold))


@dataclass(frozen=True)
class EvalRecord:
    screen_id: str
    n_elements: int
    f1: float
    f1_leaves: float
    ged: float
    cm: float


def evaluate_tree(screen_id: str, gt_elements: Sequence[Element], gt: HierarchyTree,
                  pred_elements: Sequence[Element], pred: HierarchyTree,
                  threshold: float = DEFAULT_THRESHOLD) -> EvalRecord:
    m = correspond(gt_elements, gt, pred_elements, pred, threshold)
    corr = m.all
    return EvalRecord(
        screen_id, len(gt_elements),
        f1=edge_f1(gt, pred, corr),
        f1_leaves=edge_f1(gt, pred, corr, leaves_only=True),
        ged=ged_upper_bound(gt, pred, corr),
        cm=container_match(gt, pred, m.containers),
    )


@dataclass
class EvalReport:
    records: list[EvalRecord] = field(default_factory=list)
    name: str = ""
    meta: dict = field(default_factory=dict)

    def aggregate(self) -> dict[str, tuple[float, float]]:
        out = {}
        for m in METRICS:
            vals = np.array([getattr(r, m) for r in self.records], dtype=float)
            out[m] = (float(vals.mean()), float(vals.std())) if len(vals) else (math.nan, math.nan)
        return out

    def mean(self, metric: str) -> float:
        return self.aggregate()[metric][0]

    def to_dict(self, bin_edges: Sequence[int] = DEFAULT_BIN_EDGES) -> dict:
        return {
            "name": self.name,
            "meta": self.meta,
            "records": [asdict(r) for r in self.records],
            "aggregate": {m: {"mean": mu, "std": sd} for m, (mu, sd) in self.aggregate().items()},
            "bins": [b._asdict() for b in bin_by_complexity(self, bin_edges)],
        }

    def to_json(self, bin_edges: Sequence[int] = DEFAULT_BIN_EDGES) -> str:
        return json.dumps(self.to_dict(bin_edges), indent=1, sort_keys=True)

    def to_csv(self, bin_edges: Sequence[int] = DEFAULT_BIN_EDGES) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "n_elements", *METRICS])
        for r in self.records:
            w.writerow([r.screen_id, r.n_elements, *(repr(getattr(r, m)) for m in METRICS)])
        agg = self.aggregate()
        w.writerow(["ALL", len(self.records), *(repr(agg[m][0]) for m in METRICS)])
        for b in bin_by_complexity(self, bin_edges):
            sub = [r for r in self.records if b.lo <= r.n_elements <= b.hi]
            means = [repr(float(np.mean([getattr(r, m) for r in sub]))) for m in METRICS]
            w.writerow([f"BIN:{b.label}", b.count, *means])
        return buf.getvalue()

    @classmethod
    def from_dict(cls, d: Mapping) -> "EvalReport":
        return cls([EvalRecord(**r) for r in d["records"]], d.get("name", ""), d.get("meta", {}))


class ComplexityBin(NamedTuple):
    label: str
    lo: int
    hi: float
    count: int
    mean_f1: float


def bin_by_complexity(report: EvalReport, edges: Sequence[int] = DEFAULT_BIN_EDGES,
                      metric: str = "f1") -> list[ComplexityBin]:
    """Mean metric per element-count bin; bins without screens are left out."""
    bounds = [0, *sorted(edges), math.inf]
    out = []
    for lo, hi in zip(bounds, bounds[1:]):
        sub = [getattr(r, metric) for r in report.records if lo < r.n_elements <= hi]
        if not sub:
            continue
        label = f">{lo}" if hi == math.inf else f"{lo + 1}-{hi}"
        out.append(ComplexityBin(label, lo + 1, hi, len(sub), float(np.mean(sub))))
    return out


def detector_oracle_tree(gt: HierarchyTree, survivors: Mapping[str, str] | Sequence[str]
                         ) -> HierarchyTree:
    """The ground truth restricted to the detections that survived, re-smoothed.

    ``survivors`` maps detection ids to the ground-truth element each came
    from (a plain list means detections kept their original ids).
    """
    if not isinstance(survivors, Mapping):
        survivors = {s: s for s in survivors}
    if not survivors:
        raise ValueError("no surviving detections")
    back = {}
    for det, orig in survivors.items():
        if orig not in gt.nodes or not gt[orig].is_leaf:
            raise ValueError(f"{orig!r} is not a ground-truth leaf")
        back[orig] = det
    children = {}
    for nid, node in gt.nodes.items():
        if node.is_leaf:
            continue
        children[nid] = [back.get(c, c) if gt[c].is_leaf else c
                         for c in node.children if not gt[c].is_leaf or c in back]
    labels = {nid: gt[nid].label for nid in gt.containers()}
    return collapse_containers(gt.root, children, set(back.values()), labels)
