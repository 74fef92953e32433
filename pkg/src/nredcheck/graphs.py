"""Small graph toolbox: reachability, Tarjan SCCs, 0/1 shortest paths.

Everything works on generic hashable nodes with adjacency given as
``dict[node, iterable[node]]`` (or richer per caller).  Kept dependency-free
and iterative so deep graphs cannot hit the recursion limit.
"""

from __future__ import annotations

from collections import deque
from typing import Callable, Hashable, Iterable, Mapping, Optional, TypeVar

N = TypeVar("N", bound=Hashable)


def reachable(adj: Mapping[N, Iterable[N]], starts: Iterable[N]) -> set[N]:
    seen = set(starts)
    stack = list(seen)
    while stack:
        n = stack.pop()
        for m in adj.get(n, ()):
            if m not in seen:
                seen.add(m)
                stack.append(m)
    return seen


def tarjan_scc(nodes: Iterable[N], adj: Mapping[N, Iterable[N]]) -> list[list[N]]:
    """Strongly connected components in reverse topological order (iterative)."""
    index: dict[N, int] = {}
    low: dict[N, int] = {}
    on_stack: set[N] = set()
    stack: list[N] = []
    sccs: list[list[N]] = []
    counter = 0

    for root in nodes:
        if root in index:
            continue
        work: list[tuple[N, Optional[N], object]] = [(root, None, iter(adj.get(root, ())))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, parent, it = work[-1]
            advanced = False
            for child in it:  # type: ignore[union-attr]
                if child not in index:
                    index[child] = low[child] = counter
                    counter += 1
                    stack.append(child)
                    on_stack.add(child)
                    work.append((child, node, iter(adj.get(child, ()))))
                    advanced = True
                    break
                if child in on_stack:
                    low[node] = min(low[node], index[child])
            if advanced:
                continue
            work.pop()
            if parent is not None:
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == node:
                        break
                sccs.append(comp)
    return sccs


def zero_one_shortest(
    source: N,
    neighbors: Callable[[N], Iterable[tuple[N, int]]],
) -> dict[N, int]:
    """Single-source shortest distances for edge weights in {0, 1} (deque BFS)."""
    dist: dict[N, int] = {source: 0}
    dq: deque[N] = deque([source])
    while dq:
        n = dq.popleft()
        d = dist[n]
        for m, w in neighbors(n):
            nd = d + w
            if m not in dist or nd < dist[m]:
                dist[m] = nd
                if w == 0:
                    dq.appendleft(m)
                else:
                    dq.append(m)
    return dist
