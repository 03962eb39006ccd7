"""Screens, elements and hierarchy trees.

Leaf nodes always use the id of the element they reference, so a tree over a
screen's elements shares its leaf id space with ``Screen.elements``.  Every
internal node is an abstract container.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

DEFAULT_VOCABULARY = (
    "Text",
    "Button",
    "Icon",
    "Picture",
    "TextField",
    "Checkbox",
    "Switch",
    "Slider",
    "SegmentedControl",
    "TabButton",
    "PageControl",
    "Container",
    "Other",
)


class TreeError(ValueError):
    """A hierarchy violates the single-rooted, complete, grounded tree contract."""


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box {self.as_list()}")
        if self.x_min < 0 or self.y_min < 0:
            raise ValueError(f"negative coordinates in {self.as_list()}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0

    def union(self, other: "BoundingBox") -> "BoundingBox":
        return BoundingBox(
            min(self.x_min, other.x_min),
            min(self.y_min, other.y_min),
            max(self.x_max, other.x_max),
            max(self.y_max, other.y_max),
        )

    def inside(self, width: float, height: float) -> bool:
        return self.x_max <= width and self.y_max <= height

    def scaled(self, factor: float) -> "BoundingBox":
        return BoundingBox(self.x_min * factor, self.y_min * factor,
                           self.x_max * factor, self.y_max * factor)

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


def union_bounds(boxes: Iterable[BoundingBox]) -> BoundingBox:
    boxes = list(boxes)
    if not boxes:
        raise ValueError("union of zero boxes")
    out = boxes[0]
    for b in boxes[1:]:
        out = out.union(b)
    return out


@dataclass(frozen=True)
class Element:
    id: str
    class_label: str
    bounds: BoundingBox
    text: str | None = None
    confidence: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class HierarchyNode:
    id: str
    element_id: str | None = None  # set for leaves
    label: str | None = None  # group label, containers only
    children: tuple[str, ...] = ()

    @property
    def is_leaf(self) -> bool:
        return self.element_id is not None

    @property
    def kind(self) -> str:
        return "leaf" if self.is_leaf else "container"


@dataclass(frozen=True)
class HierarchyTree:
    root: str
    nodes: Mapping[str, HierarchyNode]

    def __post_init__(self):
        validate_tree(self)

    def __getitem__(self, node_id: str) -> HierarchyNode:
        return self.nodes[node_id]

    def children(self, node_id: str) -> tuple[str, ...]:
        return self.nodes[node_id].children

    def parents(self) -> dict[str, str]:
        return {c: n.id for n in self.nodes.values() for c in n.children}

    def edges(self) -> list[tuple[str, str]]:
        return [(n.id, c) for n in self.nodes.values() for c in n.children]

    def leaves(self) -> list[str]:
        return [n.id for n in self.nodes.values() if n.is_leaf]

    def containers(self) -> list[str]:
        return [n.id for n in self.nodes.values() if not n.is_leaf]

    def element_ids(self) -> set[str]:
        return {n.element_id for n in self.nodes.values() if n.is_leaf}

    def preorder(self) -> list[str]:
        out, todo = [], [self.root]
        while todo:
            nid = todo.pop()
            out.append(nid)
            todo.extend(reversed(self.nodes[nid].children))
        return out

    def height(self, node_id: str) -> int:
        kids = self.nodes[node_id].children
        if not kids:
            return 0
        return 1 + max(self.height(c) for c in kids)

    def depth_of_leaves(self) -> dict[str, int]:
        out, todo = {}, [(self.root, 0)]
        while todo:
            nid, d = todo.pop()
            node = self.nodes[nid]
            if node.is_leaf:
                out[nid] = d
            todo.extend((c, d + 1) for c in node.children)
        return out


def validate_tree(tree: HierarchyTree) -> None:
    nodes = tree.nodes
    if tree.root not in nodes:
        raise TreeError(f"root {tree.root!r} not among nodes")
    seen_parent: dict[str, str] = {}
    for n in nodes.values():
        if n.is_leaf and n.children:
            raise TreeError(f"leaf {n.id!r} has children")
        if n.is_leaf and n.id != n.element_id:
            raise TreeError(f"leaf {n.id!r} must share its element id")
        for c in n.children:
            if c not in nodes:
                raise TreeError(f"{n.id!r} references unknown child {c!r}")
            if c in seen_parent:
                raise TreeError(f"{c!r} has two parents")
            seen_parent[c] = n.id
    if tree.root in seen_parent:
        raise TreeError("root has a parent")
    # acyclic + connected: DFS from root must reach every node exactly once
    visited, todo = set(), [tree.root]
    while todo:
        nid = todo.pop()
        if nid in visited:
            raise TreeError(f"cycle through {nid!r}")
        visited.add(nid)
        todo.extend(nodes[nid].children)
    if len(visited) != len(nodes):
        missing = sorted(set(nodes) - visited)
        raise TreeError(f"nodes unreachable from root: {missing[:5]}")


def check_spans(tree: HierarchyTree, elements: Iterable[Element]) -> None:
    """Raise unless the tree's leaves are exactly the given elements."""
    want = {e.id for e in elements}
    have = tree.leaves()
    if len(have) != len(set(have)) or set(have) != want:
        raise TreeError(
            f"leaves do not span the screen: {len(set(have) ^ want)} mismatched ids"
        )


def build_tree(root: str, children: Mapping[str, Sequence[str]],
               leaves: Iterable[str], labels: Mapping[str, str | None] | None = None
               ) -> HierarchyTree:
    """Assemble a tree from an adjacency map; ``leaves`` lists element ids."""
    leaves = set(leaves)
    labels = labels or {}
    ids = set(children) | {root} | leaves
    for kids in children.values():
        ids.update(kids)
    nodes = {}
    for nid in ids:
        if nid in leaves:
            nodes[nid] = HierarchyNode(nid, element_id=nid)
        else:
            nodes[nid] = HierarchyNode(nid, label=labels.get(nid),
                                       children=tuple(children.get(nid, ())))
    return HierarchyTree(root, nodes)


@dataclass(frozen=True)
class Screen:
    screen_id: str
    width: float
    height: float
    elements: tuple[Element, ...]
    ground_truth: HierarchyTree | None = None
    # one score per annotated hierarchy leaf, 0.0 where unmatched
    match_scores: tuple[float, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        ids = [e.id for e in self.elements]
        if len(ids) != len(set(ids)):
            raise ValueError(f"duplicate element ids on screen {self.screen_id}")
        for e in self.elements:
            if not e.bounds.inside(self.width, self.height):
                raise ValueError(f"element {e.id} outside screen {self.screen_id}")

    def element(self, element_id: str) -> Element:
        return self.by_id()[element_id]

    def by_id(self) -> dict[str, Element]:
        return {e.id: e for e in self.elements}


def canonical_key(e: Element) -> tuple[float, float, str]:
    return (e.bounds.y_min, e.bounds.x_min, e.id)


def canonical_sort(elements: Iterable[Element]) -> list[Element]:
    """Top-to-bottom, then left-to-right; ids break exact ties."""
    return sorted(elements, key=canonical_key)


def descendant_leaves(tree: HierarchyTree, node: str) -> set[str]:
    if node not in tree.nodes:
        raise KeyError(f"unknown node {node!r}")
    out, todo = set(), [node]
    while todo:
        n = tree.nodes[todo.pop()]
        if n.is_leaf:
            out.add(n.element_id)
        else:
            todo.extend(n.children)
    return out


def all_descendant_leaves(tree: HierarchyTree) -> dict[str, frozenset[str]]:
    """Descendant leaf sets for every node, in one post-order pass."""
    out: dict[str, frozenset[str]] = {}
    for nid in reversed(tree.preorder()):
        node = tree.nodes[nid]
        if node.is_leaf:
            out[nid] = frozenset((node.element_id,))
        else:
            out[nid] = frozenset().union(*(out[c] for c in node.children))
    return out


def smooth_view_hierarchy(tree: HierarchyTree, visible: Iterable[str] = ()) -> HierarchyTree:
    """Splice out invisible containers that have exactly one child.

    The root may only go if it qualifies itself, in which case its child
    becomes the new root.
    """
    visible = set(visible)

    def removable(nid):
        node = tree.nodes[nid]
        return not node.is_leaf and len(node.children) == 1 and nid not in visible

    def resolve(nid):
        while removable(nid):
            nid = tree.nodes[nid].children[0]
        return nid

    root = resolve(tree.root)
    nodes = {}
    todo = [root]
    while todo:
        nid = todo.pop()
        node = tree.nodes[nid]
        kids = tuple(resolve(c) for c in node.children)
        nodes[nid] = replace(node, children=kids)
        todo.extend(kids)
    return HierarchyTree(root, nodes)


def collapse_containers(root: str, children: Mapping[str, Sequence[str]],
                        leaves: set[str], labels: Mapping[str, str | None] | None = None
                        ) -> HierarchyTree:
    """Normalise a raw parse: drop empty containers, splice one-child ones.

    The root is kept, but if it ends up with a single container child that
    child's children are hoisted into it.
    """
    labels = dict(labels or {})
    memo: dict[str, list[str]] = {}

    def expand(nid) -> list[str]:
        # returns the node ids that stand in for ``nid`` in its parent
        if nid in leaves:
            return [nid]
        if nid in memo:
            return memo[nid]
        kids = [k for c in children.get(nid, ()) for k in expand(c)]
        memo[nid] = kids if len(kids) <= 1 else [nid]
        if len(kids) > 1:
            out_children[nid] = kids
        return memo[nid]

    out_children: dict[str, list[str]] = {}
    root_kids = [k for c in children.get(root, ()) for k in expand(c)]
    if len(root_kids) == 1 and root_kids[0] not in leaves:
        only = root_kids[0]
        root_kids = out_children.pop(only)
        if labels.get(root) is None:
            labels[root] = labels.get(only)
    out_children[root] = root_kids
    reachable = {root}
    todo = [root]
    while todo:
        for c in out_children.get(todo.pop(), ()):
            reachable.add(c)
            if c not in leaves:
                todo.append(c)
    kept = {k: v for k, v in out_children.items() if k in reachable}
    return build_tree(root, kept, reachable & leaves, labels)


def relabel(tree: HierarchyTree, mapping: Mapping[str, str]) -> HierarchyTree:
    """Rename nodes (leaves keep their element ids unless mapped too)."""
    m = lambda nid: mapping.get(nid, nid)  # noqa: E731
    nodes = {}
    for n in tree.nodes.values():
        new_id = m(n.id)
        nodes[new_id] = HierarchyNode(
            new_id,
            element_id=new_id if n.is_leaf else None,
            label=n.label,
            children=tuple(m(c) for c in n.children),
        )
    return HierarchyTree(m(tree.root), nodes)


def shape_key(tree: HierarchyTree, node: str | None = None) -> tuple:
    """Container-id-blind canonical form; equal keys mean isomorphic trees."""
    node = tree.root if node is None else node
    n = tree.nodes[node]
    if n.is_leaf:
        return ("L", n.element_id)
    return ("C", tuple(sorted(shape_key(tree, c) for c in n.children)))


def isomorphic(a: HierarchyTree, b: HierarchyTree) -> bool:
    return shape_key(a) == shape_key(b)


# -- JSON interchange -------------------------------------------------------

def tree_to_dict(tree: HierarchyTree) -> dict:
    nodes = []
    for nid in tree.preorder():
        n = tree.nodes[nid]
        rec = {"id": n.id, "kind": n.kind, "label": n.label, "children": list(n.children)}
        nodes.append(rec)
    return {"root": tree.root, "nodes": nodes}


def tree_from_dict(d: Mapping) -> HierarchyTree:
    nodes = {}
    for rec in d["nodes"]:
        kind = rec.get("kind", "container")
        if kind == "leaf":
            if rec.get("children"):
                raise TreeError(f"leaf {rec['id']!r} has children")
            nodes[rec["id"]] = HierarchyNode(rec["id"], element_id=rec.get("element", rec["id"]))
        elif kind == "container":
            nodes[rec["id"]] = HierarchyNode(rec["id"], label=rec.get("label"),
                                             children=tuple(rec.get("children", ())))
        else:
            raise TreeError(f"unknown node kind {kind!r}")
    return HierarchyTree(d["root"], nodes)


def element_to_dict(e: Element) -> dict:
    return {"id": e.id, "class": e.class_label, "bounds": e.bounds.as_list(),
            "text": e.text, "confidence": e.confidence}


def element_from_dict(d: Mapping) -> Element:
    return Element(str(d["id"]), d["class"], BoundingBox(*map(float, d["bounds"])),
                   d.get("text"), float(d.get("confidence", 1.0)))


def screen_to_dict(screen: Screen) -> dict:
    out = {
        "screen_id": screen.screen_id,
        "width": screen.width,
        "height": screen.height,
        "elements": [element_to_dict(e) for e in screen.elements],
    }
    if screen.ground_truth is not None:
        out["hierarchy"] = tree_to_dict(screen.ground_truth)
    if screen.match_scores is not None:
        out["match_scores"] = list(screen.match_scores)
    return out


def screen_from_dict(d: Mapping, vocabulary: Sequence[str] | None = None) -> Screen:
    elements = tuple(element_from_dict(e) for e in d["elements"])
    if vocabulary is not None:
        bad = {e.class_label for e in elements} - set(vocabulary)
        if bad:
            raise ValueError(f"classes outside vocabulary: {sorted(bad)}")
    gt = tree_from_dict(d["hierarchy"]) if d.get("hierarchy") else None
    if gt is not None:
        check_spans(gt, elements)
    scores = d.get("match_scores")
    return Screen(d["screen_id"], float(d["width"]), float(d["height"]), elements, gt,
                  tuple(scores) if scores is not None else None)


def save_screen(screen: Screen, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(screen_to_dict(screen), indent=1), encoding="utf-8")


def load_screen(path: str | Path, vocabulary: Sequence[str] | None = None) -> Screen:
    return screen_from_dict(json.loads(Path(path).read_text(encoding="utf-8")), vocabulary)
