"""IoU-based node correspondence and dataset quality filters."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import (BoundingBox, Element, HierarchyTree, Screen,
                   all_descendant_leaves)

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class Correspondence:
    pairs: tuple[tuple[str, str, float], ...] = ()
    unmatched_left: frozenset[str] = field(default_factory=frozenset)
    unmatched_right: frozenset[str] = field(default_factory=frozenset)

    @property
    def left_to_right(self) -> dict[str, str]:
        return {l: r for l, r, _ in self.pairs}

    @property
    def right_to_left(self) -> dict[str, str]:
        return {r: l for l, r, _ in self.pairs}

    @property
    def scores(self) -> dict[str, float]:
        """Score keyed by the left id."""
        return {l: s for l, _, s in self.pairs}

    def __len__(self):
        return len(self.pairs)

    def merged(self, other: "Correspondence") -> "Correspondence":
        return Correspondence(self.pairs + other.pairs,
                              self.unmatched_left | other.unmatched_left,
                              self.unmatched_right | other.unmatched_right)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def iou_matrix(left: Sequence[BoundingBox], right: Sequence[BoundingBox]) -> np.ndarray:
    if not left or not right:
        return np.zeros((len(left), len(right)))
    a = np.array([b.as_list() for b in left])[:, None, :]
    b = np.array([b.as_list() for b in right])[None, :, :]
    iw = np.clip(np.minimum(a[..., 2], b[..., 2]) - np.maximum(a[..., 0], b[..., 0]), 0, None)
    ih = np.clip(np.minimum(a[..., 3], b[..., 3]) - np.maximum(a[..., 1], b[..., 1]), 0, None)
    inter = iw * ih
    area_a = (a[..., 2] - a[..., 0]) * (a[..., 3] - a[..., 1])
    area_b = (b[..., 2] - b[..., 0]) * (b[..., 3] - b[..., 1])
    return inter / (area_a + area_b - inter)


def assign(left_ids: Sequence[str], right_ids: Sequence[str], scores: np.ndarray,
           threshold: float) -> Correspondence:
    """Max-total-score assignment, then drop pairs scoring under ``threshold``."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
    pairs = []
    if len(left_ids) and len(right_ids):
        rows, cols = linear_sum_assignment(scores, maximize=True)
        for i, j in zip(rows, cols):
            s = float(scores[i, j])
            if s >= threshold:
                pairs.append((left_ids[i], right_ids[j], s))
    pairs.sort()
    matched_l = {p[0] for p in pairs}
    matched_r = {p[1] for p in pairs}
    return Correspondence(tuple(pairs),
                          frozenset(left_ids) - matched_l,
                          frozenset(right_ids) - matched_r)


def match_elements(left: Sequence[Element], right: Sequence[Element],
                   threshold: float = DEFAULT_THRESHOLD) -> Correspondence:
    scores = iou_matrix([e.bounds for e in left], [e.bounds for e in right])
    return assign([e.id for e in left], [e.id for e in right], scores, threshold)


def match_containers(gt: HierarchyTree, pred: HierarchyTree, leaf_corr: Correspondence,
                     threshold: float = DEFAULT_THRESHOLD) -> Correspondence:
    """Pair containers by IoU of their descendant leaf sets.

    Predicted leaves are translated into ground-truth ids through
    ``leaf_corr`` (left = ground truth); unmatched predicted leaves never
    overlap anything.
    """
    to_gt = leaf_corr.right_to_left
    gt_desc = all_descendant_leaves(gt)
    pred_desc = all_descendant_leaves(pred)
    p_trans = {p: frozenset(to_gt.get(x, ("pred", x)) for x in pred_desc[p])
               for p in pred.containers()}
    # order by content, not by id, so renaming containers cannot change ties
    g_ids = sorted(gt.containers(), key=_content_key(gt, gt_desc))
    p_ids = sorted(pred.containers(), key=_content_key(pred, p_trans))
    g_sets = [gt_desc[g] for g in g_ids]
    p_sets = [p_trans[p] for p in p_ids]
    scores = np.zeros((len(g_ids), len(p_ids)))
    for i, gs in enumerate(g_sets):
        for j, ps in enumerate(p_sets):
            inter = len(gs & ps)
            if inter:
                scores[i, j] = inter / len(gs | ps)
    return assign(g_ids, p_ids, scores, threshold)


def _content_key(tree: HierarchyTree, desc: Mapping[str, frozenset]):
    depth = {}
    for nid in tree.preorder():
        for c in tree.children(nid):
            depth[c] = depth.get(nid, 0) + 1
    return lambda nid: (sorted(map(repr, desc[nid])), depth.get(nid, 0), nid)


def with_match_scores(screen: Screen, detections: Sequence[Element],
                      threshold: float = DEFAULT_THRESHOLD) -> Screen:
    """Attach per-annotated-leaf match scores against a detection set."""
    if screen.ground_truth is None:
        raise ValueError(f"screen {screen.screen_id} has no hierarchy to match against")
    annotated = [e for e in screen.elements if e.id in screen.ground_truth.element_ids()]
    corr = match_elements(annotated, detections, threshold)
    got = corr.scores
    return replace(screen, match_scores=tuple(got.get(e.id, 0.0) for e in annotated))


AMP80 = "AMP80"
RICO_MEAN08 = "RICO_mean08"


def keep_screen(screen: Screen, rule: str) -> bool:
    scores = screen.match_scores
    if scores is None:
        raise ValueError(f"screen {screen.screen_id} carries no match scores")
    if not scores:
        return False
    if rule == AMP80:
        return sum(1 for s in scores if s > 0.0) / len(scores) >= 0.8
    if rule == RICO_MEAN08:
        return sum(scores) / len(scores) > 0.8
    raise ValueError(f"unknown filter rule {rule!r}")


def filter_dataset(screens: Iterable[Screen], rule: str) -> list[Screen]:
    kept = []
    for s in screens:
        if s.match_scores is None:
            log.warning("rejecting %s: no match metadata", s.screen_id)
            continue
        if keep_screen(s, rule):
            kept.append(s)
    return kept
