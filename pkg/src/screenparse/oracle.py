"""Static and dynamic oracles over ground-truth hierarchies.

The oracle keeps a ground-truth node aligned with every parser stack entry.
Emit is undifferentiated, so an emitted container is bound to the first
not-yet-realised container child in canonical order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .core import HierarchyTree, Screen, all_descendant_leaves, union_bounds
from .transition import (EMIT, POP, Action, ParserState, apply, arc, initial_state,
                         is_legal, is_terminal)


class OracleError(RuntimeError):
    pass


class GoldTree:
    """A ground-truth tree with children pre-sorted into canonical order."""

    def __init__(self, gt: HierarchyTree, screen: Screen):
        self.tree = gt
        self.screen = screen
        bounds = {e.id: e.bounds for e in screen.elements}
        missing = gt.element_ids() - set(bounds)
        if missing:
            raise OracleError(f"hierarchy references unknown elements {sorted(missing)[:3]}")
        desc = all_descendant_leaves(gt)
        box = {nid: union_bounds(bounds[x] for x in leaves) for nid, leaves in desc.items()
               if leaves}

        def key(nid):
            b = box.get(nid)
            return (b.y_min, b.x_min, nid) if b else (float("inf"), float("inf"), nid)

        self.children = {nid: tuple(sorted(n.children, key=key)) for nid, n in gt.nodes.items()}
        self.is_leaf = {nid: n.is_leaf for nid, n in gt.nodes.items()}
        self.n_leaves = len(gt.leaves())


@dataclass(frozen=True)
class OracleState:
    aligned: tuple[str, ...]  # ground-truth node under each parser stack entry
    consumed: frozenset[str]

    @property
    def cursor(self) -> str:
        return self.aligned[-1]


def initial_oracle(gold: GoldTree) -> OracleState:
    return OracleState((gold.tree.root,), frozenset())


def _pending(gold: GoldTree, ostate: OracleState) -> list[str]:
    return [c for c in gold.children[ostate.cursor] if c not in ostate.consumed]


def _check_alignment(parser: ParserState, ostate: OracleState) -> None:
    if len(parser.stack) != len(ostate.aligned):
        raise OracleError("parser stack and oracle alignment differ in depth")


def optimal_actions(gold: GoldTree, parser: ParserState, ostate: OracleState,
                    legal_only: bool = True) -> set[Action]:
    _check_alignment(parser, ostate)
    if is_terminal(parser):
        return set()
    cursor = ostate.cursor
    out: set[Action] = set()
    if gold.is_leaf[cursor]:
        out.add(POP)
    else:
        pending = _pending(gold, ostate)
        for c in pending:
            if gold.is_leaf[c]:
                out.add(arc(c))
            else:
                out.add(EMIT)
        if not pending and cursor != gold.tree.root:
            out.add(POP)
    if legal_only:
        out = {a for a in out if is_legal(parser, a)}
    if not out:
        raise OracleError(f"no optimal legal action at ground-truth node {cursor!r}")
    return out


def canonical_action(gold: GoldTree, parser: ParserState, ostate: OracleState) -> Action:
    """The static choice: the first pending child in canonical order, else Pop."""
    cursor = ostate.cursor
    if gold.is_leaf[cursor]:
        return POP
    pending = _pending(gold, ostate)
    if not pending:
        return POP
    first = pending[0]
    return arc(first) if gold.is_leaf[first] else EMIT


def advance(gold: GoldTree, ostate: OracleState, action: Action) -> OracleState:
    if action.is_arc:
        return OracleState(ostate.aligned + (action.target,), ostate.consumed | {action.target})
    if action.kind == "POP":
        return OracleState(ostate.aligned[:-1], ostate.consumed)
    bound = next((c for c in _pending(gold, ostate) if not gold.is_leaf[c]), None)
    if bound is None:
        raise OracleError("Emit with no container child left to realise")
    return OracleState(ostate.aligned + (bound,), ostate.consumed | {bound})


def step(gold: GoldTree, parser: ParserState, ostate: OracleState, action: Action
         ) -> tuple[ParserState, OracleState]:
    return apply(parser, action), advance(gold, ostate, action)


def static_oracle(gt: HierarchyTree | GoldTree, screen: Screen | None = None) -> list[Action]:
    gold = gt if isinstance(gt, GoldTree) else GoldTree(gt, screen)
    parser, ostate = initial_state(gold.screen), initial_oracle(gold)
    actions = []
    while not is_terminal(parser):
        a = canonical_action(gold, parser, ostate)
        if not is_legal(parser, a):
            raise OracleError(f"canonical action {a!r} is masked")
        actions.append(a)
        parser, ostate = step(gold, parser, ostate, a)
    return actions


class DynamicStep(NamedTuple):
    executed: Action
    optimal: set[Action]
    parser: ParserState
    oracle: OracleState


def dynamic_training_step(gold: GoldTree, parser: ParserState, ostate: OracleState,
                          policy_scores: Mapping[Action, float],
                          rng: np.random.Generator) -> DynamicStep:
    """Follow the policy when its top choice is optimal, else a random optimal move."""
    if is_terminal(parser):
        raise OracleError("cannot step a finished parse")
    optimal = optimal_actions(gold, parser, ostate)
    best = max(policy_scores, key=lambda a: policy_scores[a]) if policy_scores else None
    if best in optimal:
        executed = best
    else:
        choices: Sequence[Action] = sorted(optimal)
        executed = choices[int(rng.integers(len(choices)))]
    parser, ostate = step(gold, parser, ostate, executed)
    return DynamicStep(executed, optimal, parser, ostate)
