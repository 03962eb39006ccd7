"""Seeded synthetic screens with known hierarchies, and a detector-noise model.

All randomness here comes from SplitMix64 so corpora are reproducible from
a seed on any platform.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

from .core import (BoundingBox, Element, HierarchyTree, Screen, build_tree,
                   canonical_key)

MASK64 = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform on [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi]."""
        return lo + int(self.random() * (hi - lo + 1))

    def gauss(self) -> float:
        u1 = 1.0 - self.random()
        u2 = self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def choice(self, seq: Sequence):
        return seq[self.randint(0, len(seq) - 1)]

    def weighted(self, items: Sequence, weights: Sequence[float]):
        r = self.random() * sum(weights)
        for item, w in zip(items, weights):
            r -= w
            if r < 0:
                return item
        return items[-1]

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(0, i)
            items[i], items[j] = items[j], items[i]


def derive_seed(root: int, name: str) -> int:
    """Independent named sub-stream seed (corpus, init, oracle, noise, ...)."""
    salt = int.from_bytes(hashlib.blake2b(name.encode(), digest_size=8).digest(), "little")
    return SplitMix64(root ^ salt).next_u64()


DEFAULT_CLASS_WEIGHTS = {
    "Text": 0.34, "Button": 0.10, "Icon": 0.15, "Picture": 0.12, "TextField": 0.05,
    "Checkbox": 0.03, "Switch": 0.04, "Slider": 0.02, "SegmentedControl": 0.03,
    "TabButton": 0.04, "PageControl": 0.02, "Other": 0.06,
}

TEXTUAL = {"Text", "Button", "TabButton", "TextField"}

# label -> (orientation, min children, max children, class pattern)
ARCHETYPES = {
    "Tab Bar": ("H", 3, 6, ("TabButton",)),
    "Segmented Control": ("H", 2, 5, ("SegmentedControl",)),
    "Button": ("H", 2, 2, ("Icon", "Text")),
    "Tab Bar Button": ("V", 2, 2, ("Icon", "Text")),
    "Table": ("V", 3, 12, ("Text",)),
    "Collection": ("H", 2, 8, ("Picture",)),
}


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    min_elements: int = 4
    max_elements: int = 40
    max_depth: int = 4
    min_branching: int = 2
    max_branching: int = 5
    p_horizontal_root: float = 0.15
    class_weights: dict = field(default_factory=lambda: dict(DEFAULT_CLASS_WEIGHTS))
    p_archetype: float = 0.5
    width: float = 1080.0
    height: float = 1920.0
    margin: float = 16.0
    gap: float = 40.0
    min_box: float = 4.0

    def __post_init__(self):
        if self.min_elements < 1 or self.max_elements < self.min_elements:
            raise ValueError("element count range must satisfy 1 <= min <= max")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_branching < 2 or self.max_branching < self.min_branching:
            raise ValueError("branching range must satisfy 2 <= min <= max")


class _Builder:
    def __init__(self, config: SynthConfig, rng: SplitMix64):
        self.cfg = config
        self.rng = rng
        self.children: dict[str, list[str]] = {}
        self.labels: dict[str, str | None] = {}
        self.leaf_boxes: dict[str, tuple[float, float, float, float]] = {}
        self.leaf_class: dict[str, str] = {}
        self.n_nodes = 0

    def new_id(self, prefix):
        self.n_nodes += 1
        return f"{prefix}{self.n_nodes}"

    def split(self, count: int, k: int) -> list[int]:
        cuts = list(range(1, count))
        self.rng.shuffle(cuts)
        cuts = sorted(cuts[:k - 1])
        bounds = [0] + cuts + [count]
        return [b - a for a, b in zip(bounds, bounds[1:])]

    def shape(self, count: int, depth: int):
        """Abstract subtree: int for a leaf, list of subtrees for a container."""
        if count == 1:
            return 1
        if depth >= self.cfg.max_depth - 1:
            return [1] * count
        lo = min(self.cfg.min_branching, count)
        hi = min(self.cfg.max_branching, count)
        k = self.rng.randint(lo, hi)
        return [self.shape(c, depth + 1) for c in self.split(count, k)]

    def place(self, shape, region, orient, depth, parent):
        x0, y0, x1, y1 = region
        if shape == 1:
            nid = self.new_id("n")
            self.children[parent].append(nid)
            self.leaf_box(nid, region, orient)
            return
        nid = self.new_id("g")
        if parent is not None:
            self.children[parent].append(nid)
        self.children[nid] = []
        self.labels[nid] = None
        sizes = [leaf_count(s) for s in shape]
        weights = [s ** 0.7 * self.rng.uniform(0.8, 1.25) for s in sizes]
        gap = self.cfg.gap * (0.55 ** depth)
        span = (x1 - x0) if orient == "H" else (y1 - y0)
        free = span - gap * (len(shape) - 1)
        if free / len(shape) < self.cfg.min_box:
            raise ValueError("screen too small for the requested element count")
        pos = x0 if orient == "H" else y0
        for s, w in zip(shape, weights):
            size = free * w / sum(weights)
            sub = (pos, y0, pos + size, y1) if orient == "H" else (x0, pos, x1, pos + size)
            self.place(s, sub, "V" if orient == "H" else "H", depth + 1, nid)
            pos += size + gap
        if all(s == 1 for s in shape):
            self.assign_classes(nid, orient)
        return nid

    def leaf_box(self, nid, region, orient):
        x0, y0, x1, y1 = region
        w, h = x1 - x0, y1 - y0
        # leaves fill most of their slot along the parent axis, less across it
        fw = self.rng.uniform(0.75, 1.0) if orient == "V" else self.rng.uniform(0.4, 1.0)
        fh = self.rng.uniform(0.75, 1.0) if orient == "H" else self.rng.uniform(0.4, 1.0)
        bw, bh = max(w * fw, min(w, self.cfg.min_box)), max(h * fh, min(h, self.cfg.min_box))
        bx = x0 + (w - bw) * self.rng.random()
        by = y0 + (h - bh) * self.rng.random()
        self.leaf_boxes[nid] = (bx, by, bx + bw, by + bh)

    def assign_classes(self, nid, orient):
        kids = self.children[nid]
        fits = [name for name, (o, lo, hi, _) in ARCHETYPES.items()
                if o == orient and lo <= len(kids) <= hi]
        if fits and self.rng.random() < self.cfg.p_archetype:
            label = self.rng.choice(fits)
            pattern = ARCHETYPES[label][3]
            self.labels[nid] = label
            for i, c in enumerate(kids):
                self.leaf_class[c] = pattern[i % len(pattern)]
        for c in kids:
            self.leaf_class.setdefault(c, self.random_class())

    def random_class(self):
        names = list(self.cfg.class_weights)
        return self.rng.weighted(names, [self.cfg.class_weights[n] for n in names])


def leaf_count(shape) -> int:
    return 1 if shape == 1 else sum(leaf_count(s) for s in shape)


def generate(config: SynthConfig, screen_id: str | None = None) -> Screen:
    """Recursive row/column partition of the screen with a mirroring tree."""
    rng = SplitMix64(config.seed)
    b = _Builder(config, rng)
    n = rng.randint(config.min_elements, config.max_elements)
    shape = b.shape(n, 0)
    if shape == 1:
        shape = [1]
    orient = "H" if rng.random() < config.p_horizontal_root else "V"
    m = config.margin
    region = (m, m, config.width - m, config.height - m)
    root = b.place(shape, region, orient, 0, None)
    for nid in b.leaf_boxes:
        b.leaf_class.setdefault(nid, b.random_class())

    # element ids follow canonical order so they carry no structural hint
    raw = []
    for nid, box in b.leaf_boxes.items():
        cls = b.leaf_class[nid]
        raw.append(Element(nid, cls, BoundingBox(*box)))
    raw.sort(key=canonical_key)
    rename = {e.id: f"e{i}" for i, e in enumerate(raw)}
    elements = []
    for e in raw:
        new = rename[e.id]
        text = f"{e.class_label} {new}" if e.class_label in TEXTUAL else None
        elements.append(Element(new, e.class_label, e.bounds, text, 1.0))
    children = {p: [rename.get(c, c) for c in kids] for p, kids in b.children.items()}
    tree = build_tree(root, children, rename.values(), b.labels)
    sid = screen_id if screen_id is not None else f"synth-{config.seed}"
    return Screen(sid, config.width, config.height, tuple(elements), tree)


def generate_corpus(config: SynthConfig, n_screens: int, prefix: str = "s") -> list[Screen]:
    if n_screens < 1:
        raise ValueError("corpus needs at least one screen")
    out = []
    for i in range(n_screens):
        cfg = _with_seed(config, derive_seed(config.seed, f"screen/{i}"))
        out.append(generate(cfg, f"{prefix}{i:05d}"))
    return out


def _with_seed(config: SynthConfig, seed: int) -> SynthConfig:
    return replace(config, seed=seed)


def split_counts(n: int, fractions: Sequence[float] = (0.70, 0.15, 0.15)) -> tuple[int, int, int]:
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    n_train = int(round(n * fractions[0]))
    n_val = int(round(n * fractions[1]))
    return n_train, n_val, n - n_train - n_val


def split_corpus(screens: Sequence[Screen], seed: int,
                 fractions: Sequence[float] = (0.70, 0.15, 0.15)):
    n_train, n_val, _ = split_counts(len(screens), fractions)
    order = list(range(len(screens)))
    SplitMix64(derive_seed(seed, "split")).shuffle(order)
    pick = lambda idx: [screens[i] for i in sorted(idx)]  # noqa: E731
    return (pick(order[:n_train]), pick(order[n_train:n_train + n_val]),
            pick(order[n_train + n_val:]))


# -- detection noise ---------------------------------------------------------

@dataclass(frozen=True)
class NoiseConfig:
    jitter_sigma: float = 0.0
    drop_prob: float = 0.0
    class_confusion_prob: float = 0.0
    seed: int = 0
    max_retries: int = 100

    def __post_init__(self):
        if not 0.0 <= self.drop_prob < 1.0:
            raise ValueError("drop_prob must lie in [0, 1)")
        if not 0.0 <= self.class_confusion_prob < 1.0:
            raise ValueError("class_confusion_prob must lie in [0, 1)")
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be non-negative")

    @property
    def is_clean(self) -> bool:
        return self.jitter_sigma == 0 and self.drop_prob == 0 and self.class_confusion_prob == 0


def _jitter(box: BoundingBox, sigma: float, rng: SplitMix64, width: float, height: float
            ) -> BoundingBox:
    if sigma == 0:
        return box
    sx, sy = sigma * box.width, sigma * box.height
    x0 = min(max(box.x_min + sx * rng.gauss(), 0.0), width)
    x1 = min(max(box.x_max + sx * rng.gauss(), 0.0), width)
    y0 = min(max(box.y_min + sy * rng.gauss(), 0.0), height)
    y1 = min(max(box.y_max + sy * rng.gauss(), 0.0), height)
    x0, x1 = _ordered(x0, x1, width)
    y0, y1 = _ordered(y0, y1, height)
    return BoundingBox(x0, y0, x1, y1)


def _ordered(a: float, b: float, limit: float) -> tuple[float, float]:
    lo, hi = min(a, b), max(a, b)
    if hi - lo < 1.0:
        mid = min(max((lo + hi) / 2.0, 0.5), limit - 0.5)
        lo, hi = mid - 0.5, mid + 0.5
    return lo, hi


def apply_noise(screen: Screen, noise: NoiseConfig,
                vocabulary: Sequence[str] | None = None) -> tuple[Screen, dict[str, str]]:
    """Degrade a screen's elements the way a detector would.

    Returns an unlabeled screen of detections (fresh ids) and a map from each
    detection id to the element it came from.
    """
    from .core import DEFAULT_VOCABULARY
    vocab = tuple(vocabulary or DEFAULT_VOCABULARY)
    rng = SplitMix64(derive_seed(noise.seed, f"noise/{screen.screen_id}"))
    elements = sorted(screen.elements, key=canonical_key)
    keep = [True] * len(elements)
    if noise.drop_prob > 0:
        for _ in range(noise.max_retries):
            keep = [rng.random() >= noise.drop_prob for _ in elements]
            if any(keep):
                break
        else:
            keep = [i == 0 for i in range(len(elements))]
    out, survivors = [], {}
    for e, k in zip(elements, keep):
        if not k:
            continue
        box = _jitter(e.bounds, noise.jitter_sigma, rng, screen.width, screen.height)
        cls = e.class_label
        if noise.class_confusion_prob > 0 and rng.random() < noise.class_confusion_prob:
            cls = rng.choice(vocab)
        did = f"d{len(out)}"
        out.append(Element(did, cls, box, e.text, e.confidence))
        survivors[did] = e.id
    return Screen(screen.screen_id, screen.width, screen.height, tuple(out)), survivors


def strip(screen: Screen) -> Screen:
    """The same screen without its ground truth (what a parser gets to see)."""
    return Screen(screen.screen_id, screen.width, screen.height, screen.elements)


def ground_truth(screen: Screen) -> HierarchyTree:
    if screen.ground_truth is None:
        raise ValueError(f"screen {screen.screen_id} is unlabeled")
    return screen.ground_truth
