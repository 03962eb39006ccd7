"""Applications built on a predicted hierarchy: screen reader navigation order,
declarative UI code generation and screen similarity search."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .core import BoundingBox, Element, HierarchyTree, Screen, build_tree, union_bounds

TEXT_CLASS = "Text"


# -- navigation order ---------------------------------------------------------

def accessibility_groups(tree: HierarchyTree, screen: Screen | Mapping[str, Element]
                         ) -> list[tuple[str, ...]]:
    """Leaves of height-1 containers holding at most one Text are read as one stop.

    The root is never grouped: doing so would merge a flat screen into a
    single stop.  Groups come out in tree preorder.
    """
    by_id = screen.by_id() if isinstance(screen, Screen) else screen
    groups, grouped = [], set()
    for nid in tree.preorder():
        node = tree[nid]
        if node.is_leaf:
            if nid not in grouped:
                groups.append((node.element_id,))
            continue
        if nid == tree.root or tree.height(nid) != 1:
            continue
        kids = [tree[c].element_id for c in node.children]
        if sum(by_id[k].class_label == TEXT_CLASS for k in kids) <= 1:
            groups.append(tuple(kids))
            grouped.update(node.children)
    return groups


class NavStop(NamedTuple):
    elements: tuple[str, ...]
    swipe_index: int


@dataclass(frozen=True)
class NavigationOrder:
    stops: tuple[NavStop, ...]

    def __post_init__(self):
        if [s.swipe_index for s in self.stops] != list(range(1, len(self.stops) + 1)):
            raise ValueError("swipe indices must run 1..n in order")
        ids = [e for s in self.stops for e in s.elements]
        if len(ids) != len(set(ids)):
            raise ValueError("an element appears in more than one stop")

    def __len__(self):
        return len(self.stops)

    @property
    def element_order(self) -> list[str]:
        return [e for s in self.stops for e in s.elements]

    def to_dict(self) -> dict:
        return {"stops": [{"elements": list(s.elements), "swipe_index": s.swipe_index}
                          for s in self.stops]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "NavigationOrder":
        return cls(tuple(NavStop(tuple(s["elements"]), int(s["swipe_index"]))
                         for s in d["stops"]))


class Block(NamedTuple):
    elements: tuple[str, ...]
    bounds: BoundingBox


def _gaps(blocks: Sequence[Block], lo: str, hi: str) -> list[tuple[float, float]]:
    """Clear bands along one axis as (width, cut position), in axis order."""
    spans = sorted((getattr(b.bounds, lo), getattr(b.bounds, hi)) for b in blocks)
    out, end = [], spans[0][1]
    for start, stop in spans[1:]:
        if start >= end:
            out.append((start - end, (start + end) / 2.0))
        end = max(end, stop)
    return out


def _xy_cut(blocks: list[Block]) -> list[Block]:
    if len(blocks) <= 1:
        return blocks
    for lo, hi in (("y_min", "y_max"), ("x_min", "x_max")):
        gaps = _gaps(blocks, lo, hi)
        if gaps:
            # widest band wins; among equal widths the earliest one
            _, cut = max(gaps, key=lambda g: (g[0], -g[1]))
            first = [b for b in blocks if getattr(b.bounds, hi) <= cut]
            second = [b for b in blocks if getattr(b.bounds, hi) > cut]
            return _xy_cut(first) + _xy_cut(second)
    return sorted(blocks, key=lambda b: (b.bounds.y_min, b.bounds.x_min, b.elements))


def xy_cut_order(groups: Sequence[Block | tuple[Sequence[str], BoundingBox]]
                 ) -> NavigationOrder:
    blocks = [Block(tuple(g[0]), g[1]) for g in groups]
    blocks.sort(key=lambda b: (b.bounds.y_min, b.bounds.x_min, b.elements))
    ordered = _xy_cut(blocks)
    return NavigationOrder(tuple(NavStop(b.elements, i + 1) for i, b in enumerate(ordered)))


def navigation_order(tree: HierarchyTree, screen: Screen, group: bool = True
                     ) -> NavigationOrder:
    by_id = screen.by_id()
    if group:
        groups = accessibility_groups(tree, by_id)
    else:
        groups = [(tree[l].element_id,) for l in tree.preorder() if tree[l].is_leaf]
    return xy_cut_order([Block(g, union_bounds(by_id[e].bounds for e in g)) for g in groups])


# -- code generation ------------------------------------------------------------

PHONE = "Phone"
WATCH = "Watch"

# {text}: element text (JSON-quoted), {asset}: asset name
CONTROL_TABLE: dict[str, str] = {
    "Text": "Text({text})",
    "Button": "Button({text}, action: {{}})",
    "Icon": "Image(systemName: \"circle\")",
    "Picture": "Image({asset})",
    "TextField": "TextField({text}, text: .constant(\"\"))",
    "Checkbox": "Toggle({text}, isOn: .constant(false)).toggleStyle(.checkbox)",
    "Switch": "Toggle({text}, isOn: .constant(false))",
    "Slider": "Slider(value: .constant(0.5))",
    "SegmentedControl": "Picker({text}, selection: .constant(0)) {{}}.pickerStyle(.segmented)",
    "TabButton": "Label({text}, systemImage: \"square\")",
    "PageControl": "PageIndicator()",
}

_INDENT = "    "


@dataclass(frozen=True)
class UICodeDocument:
    text: str
    assets: dict[str, list[float]] = field(default_factory=dict)
    target: str = PHONE
    theme: str = "light"


def stack_orientation(children_bounds: Sequence[BoundingBox]) -> str:
    """"H" when child centres spread more along x than along y."""
    centers = np.array([b.center for b in children_bounds], dtype=float)
    if len(centers) < 2:
        return "V"
    var_x, var_y = centers.var(axis=0)
    return "H" if var_x > var_y else "V"


def generate_code(tree: HierarchyTree, screen: Screen, target: str = PHONE,
                  theme_luminance: float | None = None,
                  table: Mapping[str, str] = CONTROL_TABLE) -> UICodeDocument:
    """Depth-first visitor emitting one control per leaf and one stack per container."""
    if target not in (PHONE, WATCH):
        raise ValueError(f"unknown target {target!r}")
    theme = "dark" if theme_luminance is not None and theme_luminance < 0.5 else "light"
    by_id = screen.by_id()
    bounds: dict[str, BoundingBox] = {}
    for nid in reversed(tree.preorder()):
        node = tree[nid]
        bounds[nid] = (by_id[node.element_id].bounds if node.is_leaf
                       else union_bounds(bounds[c] for c in node.children))
    assets: dict[str, list[float]] = {}
    lines = [f"// target: {target}", f"// theme: {theme}"]

    def visit(nid: str, depth: int) -> None:
        pad = _INDENT * depth
        node = tree[nid]
        if node.is_leaf:
            e = by_id[node.element_id]
            template = table.get(e.class_label)
            tag = f".id({json.dumps(e.id)})"
            if template is None:
                lines.append(f"{pad}// placeholder: {e.class_label} {tag}")
                return
            asset = f"asset_{e.id}"
            if "{asset}" in template:
                assets[asset] = e.bounds.as_list()
            text = json.dumps(e.text if e.text is not None else "")
            lines.append(pad + template.format(text=text, asset=json.dumps(asset)) + tag)
            return
        orient = stack_orientation([bounds[c] for c in node.children])
        if target == WATCH:
            orient = "V"
        lines.append(f"{pad}{orient}Stack {{")
        for c in node.children:
            visit(c, depth + 1)
        lines.append(pad + "}")

    visit(tree.root, 0)
    lines[-1] += f".colorScheme(.{theme})"
    return UICodeDocument("\n".join(lines) + "\n", assets, target, theme)


_ID = re.compile(r'\.id\("((?:[^"\\]|\\.)*)"\)\s*$')
_OPEN = re.compile(r"^([HV])Stack \{$")


def parse_code(text: str) -> HierarchyTree:
    """Recover the container/leaf structure from generated code."""
    children: dict[str, list[str]] = {}
    orientation: dict[str, str] = {}
    stack: list[str] = []
    leaves: list[str] = []
    root = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or (line.startswith("//") and not _ID.search(line)):
            continue
        m = _OPEN.match(line)
        if m:
            cid = f"g{len(children)}"
            children[cid] = []
            orientation[cid] = m.group(1)
            if stack:
                children[stack[-1]].append(cid)
            elif root is None:
                root = cid
            else:
                raise ValueError("more than one top-level stack")
            stack.append(cid)
            continue
        if line.startswith("}"):
            if not stack:
                raise ValueError("unbalanced closing brace")
            stack.pop()
            continue
        m = _ID.search(line)
        if not m or not stack:
            raise ValueError(f"unrecognised line: {raw!r}")
        leaf = json.loads(f'"{m.group(1)}"')
        children[stack[-1]].append(leaf)
        leaves.append(leaf)
    if stack or root is None:
        raise ValueError("unbalanced or empty document")
    return build_tree(root, children, leaves, {c: orientation[c] for c in children})


def count_stacks(doc: UICodeDocument | str) -> dict[str, int]:
    text = doc.text if isinstance(doc, UICodeDocument) else doc
    found = [m.group(1) for m in (_OPEN.match(l.strip()) for l in text.splitlines()) if m]
    return {"H": found.count("H"), "V": found.count("V")}


# -- similarity search ------------------------------------------------------------

class SearchHit(NamedTuple):
    screen_id: str
    similarity: float


def cosine_similarities(query: np.ndarray, corpus: np.ndarray) -> np.ndarray:
    q = np.asarray(query, dtype=float)
    c = np.atleast_2d(np.asarray(corpus, dtype=float))
    qn = np.linalg.norm(q)
    cn = np.linalg.norm(c, axis=1)
    denom = qn * cn
    with np.errstate(invalid="ignore", divide="ignore"):
        sims = np.where(denom > 0, c @ q / np.where(denom > 0, denom, 1.0), 0.0)
    return np.clip(sims, -1.0, 1.0)


def rank(query: np.ndarray, embeddings: Mapping[str, np.ndarray], k: int) -> list[SearchHit]:
    if not embeddings:
        raise ValueError("empty corpus")
    if k < 1:
        raise ValueError("k must be positive")
    ids = list(embeddings)
    sims = cosine_similarities(query, np.stack([embeddings[i] for i in ids]))
    hits = sorted((SearchHit(i, float(s)) for i, s in zip(ids, sims)),
                  key=lambda h: (-h.similarity, h.screen_id))
    return hits[:k]


def similarity_search(query: Screen, corpus: Sequence[Screen], model, k: int = 10
                      ) -> list[SearchHit]:
    """Top-k screens by cosine similarity of pooled encoder states."""
    from .policy import screen_embedding

    if not corpus:
        raise ValueError("empty corpus")
    embeddings = {s.screen_id: screen_embedding(s, model) for s in corpus}
    return rank(screen_embedding(query, model), embeddings, k)
