"""Strongly connected components (iterative Tarjan) over adjacency mappings."""
from __future__ import annotations

from typing import Hashable, Iterable, Mapping, Sequence, TypeVar

T = TypeVar("T", bound=Hashable)


def tarjan_scc(nodes: Sequence[T], succ: Mapping[T, Iterable[T]]) -> list[list[T]]:
    """SCCs in reverse topological order (every edge leaves an SCC towards an earlier one).

    Iterative so that deep unfoldings do not hit the recursion limit.
    """
    index: dict[T, int] = {}
    low: dict[T, int] = {}
    on_stack: set[T] = set()
    stack: list[T] = []
    out: list[list[T]] = []
    counter = 0
    for root in nodes:
        if root in index:
            continue
        work = [(root, iter(succ.get(root, ())))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(succ.get(w, ()))))
                    advanced = True
                    break
                if w in on_stack and index[w] < low[v]:
                    low[v] = index[w]
            if advanced:
                continue
            work.pop()
            if work:
                u = work[-1][0]
                if low[v] < low[u]:
                    low[u] = low[v]
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                out.append(comp)
    return out


def backward_reachable(targets: Iterable[T], pred: Mapping[T, Iterable[T]]) -> set[T]:
    seen = set(targets)
    todo = list(seen)
    while todo:
        v = todo.pop()
        for u in pred.get(v, ()):
            if u not in seen:
                seen.add(u)
                todo.append(u)
    return seen
