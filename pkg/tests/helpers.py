"""Small builders shared by the test modules."""

from hypothesis import strategies as st

from screenparse.core import BoundingBox, Element, HierarchyTree, Screen, build_tree


def el(eid, x0, y0, x1, y1, cls="Text", text=None):
    return Element(eid, cls, BoundingBox(x0, y0, x1, y1), text)


def screen(elements, tree=None, width=1000, height=1000, sid="t"):
    return Screen(sid, width, height, tuple(elements), tree)


def tree_from_nested(spec, root="root"):
    """``["a", ["b", "c"]]`` -> root{a, g{b, c}}; strings are leaves."""
    children, leaves, count = {}, [], [0]

    def walk(node, nid):
        kids = []
        for item in node:
            if isinstance(item, str):
                leaves.append(item)
                kids.append(item)
            else:
                count[0] += 1
                cid = f"g{count[0]}"
                walk(item, cid)
                kids.append(cid)
        children[nid] = kids

    walk(spec, root)
    return build_tree(root, children, leaves)


def grid_screen(tree: HierarchyTree, sid="t", cell=100.0):
    """Lay out a tree's leaves left to right in preorder, one cell each."""
    order = [n for n in tree.preorder() if tree[n].is_leaf]
    elements = [el(e, i * cell, 0, i * cell + cell * 0.8, cell * 0.8)
                for i, e in enumerate(order)]
    return Screen(sid, cell * max(1, len(order)), cell, tuple(elements), tree)


@st.composite
def random_trees(draw, min_leaves=1, max_leaves=8, max_containers=5):
    """Rooted trees with element-named leaves and ``c*`` containers."""
    n_leaves = draw(st.integers(min_leaves, max_leaves))
    n_cont = draw(st.integers(0, max_containers))
    containers = ["root"] + [f"c{i}" for i in range(n_cont)]
    parent = {}
    for i, c in enumerate(containers[1:], 1):
        parent[c] = containers[draw(st.integers(0, i - 1))]
    leaves = [f"e{i}" for i in range(n_leaves)]
    for e in leaves:
        parent[e] = draw(st.sampled_from(containers))
    children = {c: [] for c in containers}
    for node, p in parent.items():
        children[p].append(node)
    return build_tree("root", children, leaves)


def boxes_strategy(n_min=1, n_max=6, size=100):
    coord = st.integers(0, size - 1)

    @st.composite
    def box(draw):
        x0, y0 = draw(coord), draw(coord)
        return BoundingBox(x0, y0, draw(st.integers(x0 + 1, size)), draw(st.integers(y0 + 1, size)))

    return st.lists(box(), min_size=n_min, max_size=n_max)


# one element class pattern per label; classes never overlap between labels
SEPARABLE_PATTERNS = {
    "Tab Bar": ("TabButton",),
    "Table": ("Text",),
    "Collection": ("Picture",),
    "Segmented Control": ("SegmentedControl",),
    "Button": ("Button",),
    "Tab Bar Button": ("Icon",),
    "Other": ("Switch", "Checkbox"),
}


def separable_groups(n_per_label, seed=0):
    """Groups whose label is fixed by the class of their members."""
    import random
    from screenparse.grouplabel import GroupExample

    rng = random.Random(seed)
    out = []
    for label, classes in SEPARABLE_PATTERNS.items():
        for _ in range(n_per_label):
            k = rng.randint(2, 6)
            horizontal = rng.random() < 0.5
            x, y = rng.uniform(0, 200), rng.uniform(0, 1500)
            items = []
            for i in range(k):
                w, h = rng.uniform(30, 120), rng.uniform(20, 60)
                items.append(Element(f"x{i}", rng.choice(classes), BoundingBox(x, y, x + w, y + h)))
                if horizontal:
                    x += w + 5
                else:
                    y += h + 5
            out.append(GroupExample(tuple(items), 1080.0, 1920.0, label))
    rng.shuffle(out)
    return out
