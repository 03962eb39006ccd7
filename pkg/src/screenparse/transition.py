"""Arc/Emit/Pop transition system over a buffer of screen elements."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .core import HierarchyTree, Screen, canonical_sort, collapse_containers

ROOT_ID = "_root"
CONTAINER_PREFIX = "_c"
EMIT_WINDOW = 10


class IllegalAction(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Action:
    kind: str  # "ARC" | "EMIT" | "POP"
    target: str | None = None

    def __post_init__(self):
        if self.kind not in ("ARC", "EMIT", "POP"):
            raise ValueError(f"unknown action kind {self.kind!r}")
        if (self.kind == "ARC") != (self.target is not None):
            raise ValueError("only Arc actions carry a target")

    @property
    def is_arc(self) -> bool:
        return self.kind == "ARC"

    def token(self) -> str:
        return f"ARC:{self.target}" if self.is_arc else self.kind

    @classmethod
    def from_token(cls, token: str) -> "Action":
        if token.startswith("ARC:"):
            return cls("ARC", token[4:])
        return cls(token)

    def __repr__(self):
        return self.token()


EMIT = Action("EMIT")
POP = Action("POP")


def arc(element_id: str) -> Action:
    return Action("ARC", element_id)


def trace_to_json(actions: Iterable[Action]) -> str:
    return json.dumps([a.token() for a in actions])


def trace_from_json(text: str) -> list[Action]:
    return [Action.from_token(t) for t in json.loads(text)]


@dataclass(frozen=True)
class ParserState:
    buffer: tuple[str, ...]
    stack: tuple[str, ...]
    visited: frozenset[str]
    edges: tuple[tuple[str, str], ...]
    history: tuple[Action, ...]
    n_containers: int = 0

    @property
    def top(self) -> str:
        return self.stack[-1]

    def remaining(self) -> list[str]:
        return [e for e in self.buffer if e not in self.visited]

    def is_container(self, node_id: str) -> bool:
        return node_id == ROOT_ID or node_id.startswith(CONTAINER_PREFIX)


def initial_state(screen: Screen) -> ParserState:
    if not screen.elements:
        raise ValueError(f"screen {screen.screen_id} has no elements")
    ids = [e.id for e in canonical_sort(screen.elements)]
    for eid in ids:
        if eid == ROOT_ID or eid.startswith(CONTAINER_PREFIX):
            raise ValueError(f"element id {eid!r} collides with the container namespace")
    return ParserState(tuple(ids), (ROOT_ID,), frozenset(), (), ())


def is_terminal(state: ParserState) -> bool:
    return len(state.visited) == len(state.buffer)


def emit_allowed(state: ParserState) -> bool:
    recent = state.history[-EMIT_WINDOW:]
    return len(state.history) < EMIT_WINDOW or any(a.is_arc for a in recent)


def legal_actions(state: ParserState) -> list[Action]:
    """Legal moves in a fixed order: Emit, Pop, then Arcs in buffer order."""
    if is_terminal(state):
        return []
    out = []
    if emit_allowed(state):
        out.append(EMIT)
    # popping the last stack entry would strand the unvisited elements
    if len(state.stack) > 1:
        out.append(POP)
    out.extend(arc(e) for e in state.remaining())
    return out


def is_legal(state: ParserState, action: Action) -> bool:
    if is_terminal(state):
        return False
    if action.is_arc:
        return action.target in state.buffer and action.target not in state.visited
    if action.kind == "POP":
        return len(state.stack) > 1
    return emit_allowed(state)


def apply(state: ParserState, action: Action) -> ParserState:
    if not is_legal(state, action):
        raise IllegalAction(f"{action!r} is not legal here")
    history = state.history + (action,)
    if action.is_arc:
        e = action.target
        return replace(state, stack=state.stack + (e,), visited=state.visited | {e},
                       edges=state.edges + ((state.top, e),), history=history)
    if action.kind == "EMIT":
        k = state.n_containers + 1
        c = f"{CONTAINER_PREFIX}{k}"
        return replace(state, stack=state.stack + (c,), edges=state.edges + ((state.top, c),),
                       history=history, n_containers=k)
    return replace(state, stack=state.stack[:-1], history=history)


def replay(screen: Screen, actions: Sequence[Action]) -> ParserState:
    state = initial_state(screen)
    for a in actions:
        state = apply(state, a)
    return state


def raw_children(state: ParserState) -> dict[str, list[str]]:
    """Adjacency of the partial parse.

    Elements are always leaves, so anything attached while an element was
    on top of the stack is hung on that element's nearest container instead.
    """
    children: dict[str, list[str]] = {ROOT_ID: []}
    owner: dict[str, str] = {}
    for parent, child in state.edges:
        if not state.is_container(parent):
            parent = owner[parent]
        owner[child] = parent
        children.setdefault(parent, []).append(child)
    return children


def extract_tree(state: ParserState) -> HierarchyTree:
    """The finished parse with empty and single-child containers collapsed."""
    if not is_terminal(state):
        raise ValueError("parse is not finished")
    return collapse_containers(ROOT_ID, raw_children(state), set(state.buffer))


def max_steps(n_elements: int) -> int:
    """Upper bound on the length of any legal run.

    At most ``EMIT_WINDOW`` Emits may follow each Arc (and precede the
    first), and each Pop needs an earlier push.
    """
    emits = EMIT_WINDOW * n_elements
    return n_elements + emits + (n_elements - 1 + emits)
