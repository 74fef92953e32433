"""Finite-automaton checks over thread templates.

Templates are edge-labeled NFAs with one initial and one accepting state.
This module decides trace-language equivalence (optionally erasing a set of
action kinds on either side) and searches for projection collisions: two
distinct accepted words that agree after erasure.  Both checks return
concrete counterexample words.
"""

from __future__ import annotations

from collections import deque
from typing import Iterable, Optional

from .model import Action, ActionKind, ThreadTemplate

Word = tuple[Action, ...]


class _Nfa:
    def __init__(self, t: ThreadTemplate, erase: frozenset[ActionKind]):
        self.init = t.init
        self.exit = t.exit
        self.moves: dict[str, dict[Action, set[str]]] = {}
        self.eps: dict[str, set[str]] = {}
        for e in t.edges:
            if e.action.kind in erase:
                self.eps.setdefault(e.src, set()).add(e.dst)
            else:
                self.moves.setdefault(e.src, {}).setdefault(e.action, set()).add(e.dst)

    def closure(self, states: Iterable[str]) -> frozenset[str]:
        seen = set(states)
        stack = list(seen)
        while stack:
            s = stack.pop()
            for nxt in self.eps.get(s, ()):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return frozenset(seen)

    def start(self) -> frozenset[str]:
        return self.closure([self.init])

    def step(self, states: frozenset[str], a: Action) -> frozenset[str]:
        out: set[str] = set()
        for s in states:
            out.update(self.moves.get(s, {}).get(a, ()))
        return self.closure(out)

    def labels(self, states: frozenset[str]) -> set[Action]:
        out: set[Action] = set()
        for s in states:
            out.update(self.moves.get(s, {}).keys())
        return out

    def accepts(self, states: frozenset[str]) -> bool:
        return self.exit in states


def language_equivalent(
    left: ThreadTemplate,
    right: ThreadTemplate,
    erase_left: Iterable[ActionKind] = (),
    erase_right: Iterable[ActionKind] = (),
) -> tuple[bool, Optional[Word]]:
    """Decide T(left)|erased == T(right)|erased via lazy joint determinization.

    Returns (True, None) on equality, else (False, word) where `word` is
    accepted by exactly one side.  The empty word never counts (templates
    with distinct init and exit never accept it).
    """
    n1 = _Nfa(left, frozenset(erase_left))
    n2 = _Nfa(right, frozenset(erase_right))
    start = (n1.start(), n2.start())
    parents: dict[tuple[frozenset[str], frozenset[str]], tuple] = {start: ()}
    queue = deque([start])
    while queue:
        s1, s2 = queue.popleft()
        if n1.accepts(s1) != n2.accepts(s2):
            word: list[Action] = []
            key = (s1, s2)
            while parents[key]:
                prev, a = parents[key]
                word.append(a)
                key = prev
            return False, tuple(reversed(word))
        for a in sorted(n1.labels(s1) | n2.labels(s2), key=Action.sort_key):
            nxt = (n1.step(s1, a), n2.step(s2, a))
            if not nxt[0] and not nxt[1]:
                continue
            if nxt not in parents:
                parents[nxt] = ((s1, s2), a)
                queue.append(nxt)
    return True, None


def find_projection_collision(
    t: ThreadTemplate, erased: Iterable[ActionKind]
) -> Optional[tuple[Word, Word]]:
    """Find two distinct accepted words whose erased projections coincide.

    Runs a product search over two copies of the template.  Erased steps are
    consumed in matched pairs until, in one guessed projection gap, the first
    copy takes strictly more erased steps than the second; afterwards the
    counts are free.  Any accepting product state past that guess witnesses
    the collision.  Returns the two full words, or None if the projection is
    injective on the trace language.
    """
    erased = frozenset(erased)
    plain_moves: dict[str, list[tuple[Action, str]]] = {}
    erased_moves: dict[str, list[tuple[Action, str]]] = {}
    for e in t.edges:
        bucket = erased_moves if e.action.kind in erased else plain_moves
        bucket.setdefault(e.src, []).append((e.action, e.dst))

    MATCHED, EXCESS, FREE = 0, 1, 2
    start = (t.init, t.init, MATCHED)
    # parent edge: (previous state, word1 suffix, word2 suffix)
    parents: dict[tuple, tuple] = {start: ()}
    queue = deque([start])

    def found(state: tuple) -> tuple[Word, Word]:
        w1: list[Action] = []
        w2: list[Action] = []
        key = state
        while parents[key]:
            prev, a1, a2 = parents[key]
            if a1 is not None:
                w1.append(a1)
            if a2 is not None:
                w2.append(a2)
            key = prev
        return tuple(reversed(w1)), tuple(reversed(w2))

    def push(state: tuple, prev: tuple, a1: Optional[Action], a2: Optional[Action]) -> None:
        if state not in parents:
            parents[state] = (prev, a1, a2)
            queue.append(state)

    while queue:
        state = queue.popleft()
        u, v, phase = state
        if phase != MATCHED and u == t.exit and v == t.exit:
            return found(state)
        for a, u2 in plain_moves.get(u, ()):
            for b, v2 in plain_moves.get(v, ()):
                if a == b:
                    nxt_phase = FREE if phase != MATCHED else MATCHED
                    push((u2, v2, nxt_phase), state, a, b)
        if phase == MATCHED:
            for a, u2 in erased_moves.get(u, ()):
                for b, v2 in erased_moves.get(v, ()):
                    push((u2, v2, MATCHED), state, a, b)
                push((u2, v, EXCESS), state, a, None)
        elif phase == EXCESS:
            for a, u2 in erased_moves.get(u, ()):
                push((u2, v, EXCESS), state, a, None)
        else:
            for a, u2 in erased_moves.get(u, ()):
                push((u2, v, FREE), state, a, None)
            for b, v2 in erased_moves.get(v, ()):
                push((u, v2, FREE), state, None, b)
    return None
