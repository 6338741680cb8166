"""A* and Yen's k-shortest loopless paths over weighted cell graphs."""
from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Set, Tuple

import numpy as np

Edge = Tuple[int, int]


@dataclass(frozen=True)
class CellSequence:
    cells: Tuple[int, ...]
    cost: float

    def __len__(self) -> int:
        return len(self.cells)


class WeightedGraph:
    """Undirected adjacency with per-edge weights and an optional heuristic."""

    def __init__(self, adj: Dict[int, List[Tuple[int, float]]],
                 heuristic: Optional[Callable[[int], float]] = None):
        self.adj = {int(v): sorted((int(n), float(w)) for n, w in lst) for v, lst in adj.items()}
        self.heuristic = heuristic or (lambda v: 0.0)

    @classmethod
    def from_edges(cls, edges: Iterable[Edge], weights: Sequence[float],
                   vertices: Iterable[int] = (), heuristic=None) -> "WeightedGraph":
        adj: Dict[int, List[Tuple[int, float]]] = {int(v): [] for v in vertices}
        for (i, j), w in zip(edges, weights):
            adj.setdefault(int(i), []).append((int(j), float(w)))
            adj.setdefault(int(j), []).append((int(i), float(w)))
        return cls(adj, heuristic)

    @classmethod
    def from_overlay(cls, graph, overlay) -> "WeightedGraph":
        """Overlaid cell graph with heuristic ``||anchor(v) - w_t||``."""
        adj = {int(v): [(n, overlay.weight(graph, e)) for n, e in graph.neighbors(v)]
               for v in graph.vertices}
        w_t = overlay.w_t
        cache: Dict[int, float] = {}

        def h(v: int) -> float:
            if v not in cache:
                cache[v] = float(np.linalg.norm(overlay.anchor(graph, v) - w_t))
            return cache[v]

        return cls(adj, h)

    def weight(self, i: int, j: int) -> float:
        for n, w in self.adj[i]:
            if n == j:
                return w
        raise KeyError((i, j))

    def path_cost(self, cells: Sequence[int]) -> float:
        return float(sum(self.weight(a, b) for a, b in zip(cells[:-1], cells[1:])))


def astar(g: WeightedGraph, src: int, dst: int,
          banned_vertices: Set[int] = frozenset(), banned_edges: Set[Edge] = frozenset(),
          use_heuristic: bool = True) -> Optional[CellSequence]:
    """Minimum-cost sequence, or None when ``dst`` is unreachable.

    Ties on f are broken by hop count, then by the lexicographic vertex list.
    """
    if src not in g.adj or dst not in g.adj or src in banned_vertices:
        return None
    h = g.heuristic if use_heuristic else (lambda v: 0.0)
    best = {src: 0.0}
    closed: Set[int] = set()
    heap = [(h(src), 0, (src,), 0.0)]
    while heap:
        f, hops, path, cost = heapq.heappop(heap)
        v = path[-1]
        if v in closed:
            continue
        if v == dst:
            return CellSequence(path, g.path_cost(path))
        closed.add(v)
        for n, w in g.adj[v]:
            if n in closed or n in banned_vertices or (v, n) in banned_edges:
                continue
            c = cost + w
            if c < best.get(n, math.inf):
                best[n] = c
                heapq.heappush(heap, (c + h(n), hops + 1, path + (n,), c))
    return None


def dijkstra(g: WeightedGraph, src: int, dst: int) -> Optional[CellSequence]:
    return astar(g, src, dst, use_heuristic=False)


StopFn = Callable[[int, float, float], bool]


def yen_paths(g: WeightedGraph, src: int, dst: int,
              stop: Optional[StopFn] = None) -> Iterator[CellSequence]:
    """Loopless sequences in nondecreasing cost (Yen).

    ``stop(k, elapsed, best_candidate_cost)`` is polled between spur searches;
    returning True ends the enumeration.
    """
    t0 = time.perf_counter()
    first = astar(g, src, dst)
    if first is None:
        return
    found: List[CellSequence] = [first]
    yield first
    if src == dst:
        return
    cand: List[Tuple[float, int, Tuple[int, ...]]] = []
    seen: Set[Tuple[int, ...]] = {first.cells}

    def best_cand() -> float:
        return cand[0][0] if cand else math.inf

    while True:
        last = found[-1].cells
        for i in range(len(last) - 1):
            if stop is not None and stop(len(found), time.perf_counter() - t0, best_cand()):
                return
            root = last[:i + 1]
            banned_e: Set[Edge] = set()
            for p in found:
                if p.cells[:i + 1] == root and len(p.cells) > i + 1:
                    a, b = p.cells[i], p.cells[i + 1]
                    banned_e.add((a, b))
                    banned_e.add((b, a))
            banned_v = set(root[:-1])
            spur = astar(g, root[-1], dst, banned_v, banned_e)
            if spur is None:
                continue
            cells = root[:-1] + spur.cells
            if cells in seen:
                continue
            seen.add(cells)
            heapq.heappush(cand, (g.path_cost(cells), len(cells), cells))
        if stop is not None and stop(len(found), time.perf_counter() - t0, best_cand()):
            return
        if not cand:
            return
        cost, _, cells = heapq.heappop(cand)
        nxt = CellSequence(cells, cost)
        found.append(nxt)
        yield nxt


def yen_ksp(g: WeightedGraph, src: int, dst: int,
            emit: Optional[Callable[[CellSequence], None]] = None,
            stop: Optional[StopFn] = None, k_max: Optional[int] = None) -> List[CellSequence]:
    """Collect up to ``k_max`` sequences, calling ``emit`` on each as it is found."""
    out: List[CellSequence] = []

    def _stop(k, elapsed, best):
        if k_max is not None and k >= k_max:
            return True
        return stop is not None and stop(k, elapsed, best)

    for p in yen_paths(g, src, dst, _stop):
        out.append(p)
        if emit is not None:
            emit(p)
        if k_max is not None and len(out) >= k_max:
            break
    return out


def all_simple_paths(g: WeightedGraph, src: int, dst: int, limit: Optional[int] = None) -> List[CellSequence]:
    """Every loopless src->dst sequence by DFS; stops once more than ``limit`` are found."""
    out: List[CellSequence] = []
    if src == dst:
        return [CellSequence((src,), 0.0)]
    stack = [(src, (src,))]
    while stack:
        v, path = stack.pop()
        for n, _ in reversed(g.adj[v]):
            if n in path:
                continue
            p = path + (n,)
            if n == dst:
                out.append(CellSequence(p, g.path_cost(p)))
                if limit is not None and len(out) > limit:
                    return out
            else:
                stack.append((n, p))
    return out
