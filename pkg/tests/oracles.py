"""Independent brute-force checks shared by unit and acceptance tests."""
import itertools

import torch

from screenparse.core import build_tree
from screenparse.oracle import GoldTree, initial_oracle, optimal_actions, step
from screenparse.policy import DTYPE
from screenparse.synth import SynthConfig, generate
from screenparse.transition import EMIT, extract_tree, initial_state, is_terminal


def exact_ged(gt, pred):
    """Exhaustive minimum over node maps: unit-cost node and edge insert/delete.

    Leaves may only map to the leaf of the same element; containers to
    containers.  Every partial injective map is tried.
    """
    pn = sorted(pred.nodes)
    gn = sorted(gt.nodes)
    ge = set(gt.edges())
    pe = list(pred.edges())

    def label(t, n):
        return t[n].element_id if t[n].is_leaf else "<container>"

    best = [float("inf")]

    def cost(m):
        used = set(m.values())
        nodes = (len(gn) - len(used)) + (len(pn) - len(m))
        mapped = {(m.get(p, ("p", p)), m.get(c, ("p", c))) for p, c in pe}
        return nodes + len(ge ^ mapped)

    def go(i, m, used):
        if i == len(pn):
            best[0] = min(best[0], cost(m))
            return
        p = pn[i]
        go(i + 1, m, used)
        for g in gn:
            if g not in used and label(gt, g) == label(pred, p):
                m[p] = g
                used.add(g)
                go(i + 1, m, used)
                del m[p]
                used.discard(g)

    go(0, {}, set())
    return best[0]


def random_small_tree(rng, leaf_pool):
    while True:
        n_leaves = rng.randint(1, min(5, len(leaf_pool)))
        n_cont = rng.randint(1, 6 - n_leaves)
        leaves = rng.sample(leaf_pool, n_leaves)
        conts = ["R"] + [f"C{i}" for i in range(1, n_cont)]
        children = {c: [] for c in conts}
        for i, c in enumerate(conts[1:], 1):
            children[conts[rng.randrange(i)]].append(c)
        for x in leaves:
            children[rng.choice(conts)].append(x)
        if all(children[c] for c in conts):
            return build_tree("R", children, leaves)


def exhaustive_best(scores):
    """Highest total over every injective assignment of the smaller side."""
    n, m = scores.shape
    best = 0.0
    if n <= m:
        for cols in itertools.permutations(range(m), n):
            best = max(best, sum(scores[i, c] for i, c in enumerate(cols)))
    else:
        for rows in itertools.permutations(range(n), m):
            best = max(best, sum(scores[r, j] for j, r in enumerate(rows)))
    return best


def optimal_rollout(s, rng):
    gold = GoldTree(s.ground_truth, s)
    p, o = initial_state(s), initial_oracle(gold)
    while not is_terminal(p):
        opts = optimal_actions(gold, p, o)
        assert opts, "oracle returned nothing before the end"
        # Emit is optimal exactly when a container child is still pending
        pending = [c for c in gold.children[o.cursor] if c not in o.consumed]
        has_container = any(not gold.is_leaf[c] for c in pending) if not gold.is_leaf[o.cursor] else False
        assert (EMIT in opts) == has_container
        p, o = step(gold, p, o, rng.choice(sorted(opts)))
    return extract_tree(p)


def _flat_params(model):
    return [p for p in model.parameters()]


def fd_check(model, loss_fn, rng, n_coords=12, eps=1e-5):
    """Largest relative error between autograd and central differences."""
    model.zero_grad()
    loss = loss_fn()
    loss.backward()
    params = _flat_params(model)
    grads = [p.grad.detach().clone() for p in params]
    worst = 0.0
    with torch.no_grad():
        # random direction through every parameter at once
        dirs = [torch.as_tensor(rng.standard_normal(p.shape), dtype=DTYPE) for p in params]
        analytic = sum(float((g * d).sum()) for g, d in zip(grads, dirs))
        for p, d in zip(params, dirs):
            p.add_(eps * d)
        up = float(loss_fn())
        for p, d in zip(params, dirs):
            p.sub_(2 * eps * d)
        down = float(loss_fn())
        for p, d in zip(params, dirs):
            p.add_(eps * d)
        numeric = (up - down) / (2 * eps)
        worst = max(worst, abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8))
        # a handful of single coordinates
        for _ in range(n_coords):
            k = int(rng.integers(len(params)))
            p = params[k]
            idx = tuple(int(rng.integers(s)) for s in p.shape)
            old = float(p[idx])
            p[idx] = old + eps
            up = float(loss_fn())
            p[idx] = old - eps
            down = float(loss_fn())
            p[idx] = old
            numeric = (up - down) / (2 * eps)
            analytic = float(grads[k][idx])
            scale = max(abs(analytic), abs(numeric))
            if scale > 1e-6:
                worst = max(worst, abs(analytic - numeric) / scale)
    return worst


def grad_check_screens(n=20):
    """Random 5-element screens with ground-truth trees from the generator layout."""
    out = []
    for i in range(n):
        s = generate(SynthConfig(seed=500 + i, min_elements=5, max_elements=5))
        out.append(s)
    return out
