"""Path optimization over cell sequences.

* :func:`socp_shortest_path` - shortest polyline through a fixed sequence,
* :func:`ksp_socp` - anytime search over Yen's sequences (``k_max=1`` is A*-SOCP),
* :func:`exact_shortest_path` - best-first branch-and-bound over loopless sequences.

Waypoint ``i`` must lie in cell ``S_i`` shrunk by its face margins.
"""
from __future__ import annotations

import heapq
import json
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .cellgraph import (ConnectivityGraph, DEFAULT_EPS, compute_margins, query_overlay,
                        shrunk_box)
from .conic import ConicEngine, SumOfNorms, default_engine
from .decomp import Decomposition
from .errors import QueryError, ResourceError
from .search import CellSequence, WeightedGraph, yen_paths

PATH_FORMAT = "cellplan.path/1"
BOX_TOL = 1e-7        # meters, box-membership slack for feasibility checks
DUP_TOL = 1e-9        # meters, consecutive waypoints closer than this are merged


def polyline_length(points) -> float:
    p = np.asarray(points, dtype=float)
    if len(p) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum())


def collapse(points, tol: float = DUP_TOL) -> np.ndarray:
    """Drop consecutive duplicates (keeps the first and last point)."""
    p = np.asarray(points, dtype=float)
    if len(p) < 2:
        return p.copy()
    keep = [0]
    for i in range(1, len(p)):
        if np.linalg.norm(p[i] - p[keep[-1]]) > tol:
            keep.append(i)
    if keep[-1] != len(p) - 1:
        keep[-1] = len(p) - 1
    return p[keep]


@dataclass
class PathQuery:
    w_in: np.ndarray
    w_t: np.ndarray
    eps: float = DEFAULT_EPS
    deadline: Optional[float] = None   # seconds
    k_max: Optional[int] = None

    def __post_init__(self):
        self.w_in = np.asarray(self.w_in, dtype=float)
        self.w_t = np.asarray(self.w_t, dtype=float)


@dataclass
class AnytimeTrace:
    samples: List[Tuple[float, float, int]] = field(default_factory=list)

    def record(self, elapsed: float, length: float, k: int) -> None:
        self.samples.append((float(elapsed), float(length), int(k)))

    def lengths(self) -> List[float]:
        return [s[1] for s in self.samples]

    def nonincreasing(self) -> bool:
        ls = self.lengths()
        return all(b <= a for a, b in zip(ls, ls[1:]))


@dataclass
class Path:
    """Waypoints aligned one-to-one with ``cells``; ``length`` in meters."""

    waypoints: np.ndarray
    cells: Tuple[int, ...]
    length: float
    graph_cost: float = float("nan")
    gap: float = 0.0
    planner: str = ""
    trace: Optional[AnytimeTrace] = None
    meta: dict = field(default_factory=dict)

    @property
    def polyline(self) -> np.ndarray:
        return collapse(self.waypoints)

    def to_dict(self, timings: bool = False) -> dict:
        """Trace samples are ``[length, k]``; ``timings`` prepends elapsed seconds,
        which makes the document vary between otherwise identical runs."""
        if self.trace is None:
            trace = []
        elif timings:
            trace = [list(s) for s in self.trace.samples]
        else:
            trace = [[s[1], s[2]] for s in self.trace.samples]
        return {
            "format": PATH_FORMAT,
            "planner": self.planner,
            "waypoints": [[float(x) for x in w] for w in self.waypoints],
            "cells": [int(c) for c in self.cells],
            "length": float(self.length),
            "trace": trace,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Path":
        if doc.get("format") != PATH_FORMAT:
            raise ValueError(f"not a path document: format={doc.get('format')!r}")
        w = np.array(doc["waypoints"], dtype=float).reshape(-1, 3)
        samples = [tuple(s) if len(s) == 3 else (float("nan"), *s) for s in doc.get("trace", [])]
        tr = AnytimeTrace(samples) if samples else None
        return cls(w, tuple(doc.get("cells", [])), float(doc["length"]),
                   planner=doc.get("planner", ""), trace=tr, meta=doc.get("meta", {}))

    def dumps(self, timings: bool = False) -> str:
        return json.dumps(self.to_dict(timings), indent=1, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "Path":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Feasibility


@dataclass
class Feasibility:
    ok: bool
    index: int = 0          # 1-based waypoint index of the first violation, 0 if none
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


def check_feasibility(W, S: Sequence[int], graph: ConnectivityGraph, dec: Decomposition,
                      margins: np.ndarray, tol: float = BOX_TOL) -> Feasibility:
    """Flow constraint on ``S`` plus shrunk-box membership of every waypoint.

    Repeating a cell (``S_i == S_{i-1}``) is allowed: the segment stays inside
    one convex cell.
    """
    W = np.asarray(W, dtype=float).reshape(-1, 3)
    if len(W) != len(S):
        raise ValueError(f"{len(W)} waypoints but {len(S)} sequence entries")
    for i in range(1, len(S)):
        a, b = int(S[i - 1]), int(S[i])
        if a != b and not graph.adjacent(a, b):
            return Feasibility(False, i + 1, f"cells {a} and {b} are not connected")
    for i, (w, c) in enumerate(zip(W, S)):
        c = int(c)
        if not (1 <= c <= dec.cell_count) or dec.occ[c - 1]:
            return Feasibility(False, i + 1, f"cell {c} is not a free cell")
        lo, hi = shrunk_box(dec, margins, c)
        if np.any(w < lo - tol) or np.any(w > hi + tol):
            return Feasibility(False, i + 1, f"waypoint {i + 1} lies outside cell {c}")
    return Feasibility(True)


# ---------------------------------------------------------------------------
# Fixed sequence


def _require_inside(dec, margins, c, p, name):
    lo, hi = shrunk_box(dec, margins, c)
    if np.any(p < lo - BOX_TOL) or np.any(p > hi + BOX_TOL):
        raise QueryError(f"{name} {np.asarray(p).tolist()} violates the safety margin of cell {c}")


def _sequence_program(cells, dec, margins, w_in, w_t, free_end: bool) -> SumOfNorms:
    """Variables are waypoints 2..N-1 (or 2..N with a free terminal)."""
    n_free = len(cells) - 1 if free_end else len(cells) - 2
    lb = np.zeros(3 * n_free)
    ub = np.zeros(3 * n_free)
    for k in range(n_free):
        lb[3 * k:3 * k + 3], ub[3 * k:3 * k + 3] = shrunk_box(dec, margins, int(cells[k + 1]))
    prob = SumOfNorms(3 * n_free, lb, ub)

    def var(k):
        return range(3 * k, 3 * k + 3)

    if n_free == 0:
        prob.add_difference(None, None, w_t - w_in)
        return prob
    prob.add_difference(var(0), None, -w_in)
    for k in range(1, n_free):
        prob.add_difference(var(k), var(k - 1), np.zeros(3))
    prob.add_difference(None, var(n_free - 1), w_t)
    return prob


def socp_shortest_path(S, dec: Decomposition, margins: np.ndarray, w_in, w_t,
                       engine: Optional[ConicEngine] = None) -> Path:
    """Shortest polyline visiting the cells of ``S`` in order, endpoints fixed."""
    cells = tuple(int(c) for c in (S.cells if isinstance(S, CellSequence) else S))
    w_in = np.asarray(w_in, dtype=float)
    w_t = np.asarray(w_t, dtype=float)
    if not cells:
        raise ValueError("empty cell sequence")
    _require_inside(dec, margins, cells[0], w_in, "start")
    _require_inside(dec, margins, cells[-1], w_t, "goal")
    cost = S.cost if isinstance(S, CellSequence) else float("nan")
    if len(cells) == 1:
        return Path(np.stack([w_in, w_t]), (cells[0], cells[0]),
                    float(np.linalg.norm(w_t - w_in)), cost)
    prob = _sequence_program(cells, dec, margins, w_in, w_t, free_end=False)
    if prob.n == 0:
        W = np.stack([w_in, w_t])
        return Path(W, cells, polyline_length(W), cost)
    sol = (engine or default_engine()).solve(prob)
    W = np.vstack([w_in, sol.z.reshape(-1, 3), w_t])
    return Path(W, cells, polyline_length(W), cost, gap=sol.gap)


def prefix_bound(prefix, dec, margins, w_in, w_t, engine=None) -> float:
    """Lower bound on any path starting with ``prefix``.

    Minimum over the prefix waypoints, with the last one free in its cell, of
    the prefix length plus the straight line from that waypoint to ``w_t``.
    Uses the dual objective so numerical slack never overstates the bound.
    """
    cells = tuple(int(c) for c in prefix)
    if len(cells) == 1:
        return float(np.linalg.norm(w_t - w_in))
    prob = _sequence_program(cells, dec, margins, w_in, w_t, free_end=True)
    sol = (engine or default_engine()).solve(prob)
    return min(sol.value, sol.dual_value)


# ---------------------------------------------------------------------------
# Anytime k-shortest-paths planner


@dataclass
class PlanResult:
    path: Optional[Path]
    trace: AnytimeTrace
    k: int = 0                     # sequences fully evaluated
    status: str = "ok"             # ok | no-path
    truncated: bool = False        # stopped by the deadline
    exhausted: bool = False        # Yen ran out of sequences (globally optimal)
    elapsed: float = 0.0

    @property
    def length(self) -> float:
        return math.inf if self.path is None else self.path.length


def _same_cell_path(w_in, w_t, c, planner) -> Path:
    W = np.stack([w_in, w_t])
    return Path(W, (c, c), polyline_length(W), 0.0, planner=planner)


def ksp_socp(graph: ConnectivityGraph, dec: Decomposition, query: PathQuery,
             margins: Optional[np.ndarray] = None, engine: Optional[ConicEngine] = None,
             grid=None, planner: str = "ksp-socp") -> PlanResult:
    """Evaluate Yen's sequences in cost order, keeping the shortest polyline.

    The first sequence (the A* one) is always evaluated, even with a zero
    deadline. Stops on ``k_max``, the deadline, or exhaustion.
    """
    t0 = time.perf_counter()
    if margins is None:
        margins = compute_margins(dec, grid, query.eps)
    ov = query_overlay(graph, query.w_in, query.w_t, dec)
    trace = AnytimeTrace()
    if ov.start == ov.goal:
        _require_inside(dec, margins, ov.start, query.w_in, "start")
        _require_inside(dec, margins, ov.goal, query.w_t, "goal")
        p = _same_cell_path(query.w_in, query.w_t, ov.start, planner)
        trace.record(time.perf_counter() - t0, p.length, 1)
        p.trace = trace
        return PlanResult(p, trace, 1, exhausted=True, elapsed=time.perf_counter() - t0)

    wg = WeightedGraph.from_overlay(graph, ov)
    state = {"deadline_hit": False}

    def stop(k, elapsed, best):
        if query.k_max is not None and k >= query.k_max:
            return True
        if query.deadline is not None and time.perf_counter() - t0 >= query.deadline:
            state["deadline_hit"] = True
            return True
        return False

    best: Optional[Path] = None
    k = 0
    complete = True
    for seq in yen_paths(wg, ov.start, ov.goal, stop):
        p = socp_shortest_path(seq, dec, margins, query.w_in, query.w_t, engine)
        k += 1
        if best is None or p.length < best.length:
            best = p
            trace.record(time.perf_counter() - t0, p.length, k)
        if query.k_max is not None and k >= query.k_max:
            complete = False
            break
        if query.deadline is not None and time.perf_counter() - t0 >= query.deadline:
            state["deadline_hit"] = True
            break
    elapsed = time.perf_counter() - t0
    if best is None:
        return PlanResult(None, trace, 0, "no-path", elapsed=elapsed)
    exhausted = complete and not state["deadline_hit"]
    best.planner, best.trace = planner, trace
    best.meta = {"k": k}
    return PlanResult(best, trace, k, truncated=state["deadline_hit"], exhausted=exhausted,
                      elapsed=elapsed)


def astar_socp(graph, dec, query: PathQuery, margins=None, engine=None, grid=None) -> PlanResult:
    q = PathQuery(query.w_in, query.w_t, query.eps, None, 1)
    return ksp_socp(graph, dec, q, margins, engine, grid, planner="astar-socp")


# ---------------------------------------------------------------------------
# Exact branch-and-bound


@dataclass
class ExactResult(PlanResult):
    nodes: int = 0
    lower_bound: float = 0.0


DEFAULT_NODE_CAP = 200_000


def exact_shortest_path(graph: ConnectivityGraph, dec: Decomposition, query: PathQuery,
                        margins: Optional[np.ndarray] = None, engine: Optional[ConicEngine] = None,
                        grid=None, node_cap: int = DEFAULT_NODE_CAP,
                        incumbent: Optional[Path] = None) -> ExactResult:
    """Globally shortest path over loopless cell sequences.

    Best-first on the prefix lower bound; a node whose bound reaches the
    incumbent is pruned, so the first popped node that cannot beat the
    incumbent certifies optimality. Raises :class:`ResourceError` after
    ``node_cap`` bound evaluations.
    """
    t0 = time.perf_counter()
    if margins is None:
        margins = compute_margins(dec, grid, query.eps)
    w_in, w_t = query.w_in, query.w_t
    ov = query_overlay(graph, w_in, w_t, dec)
    trace = AnytimeTrace()
    if ov.start == ov.goal:
        _require_inside(dec, margins, ov.start, w_in, "start")
        _require_inside(dec, margins, ov.goal, w_t, "goal")
        p = _same_cell_path(w_in, w_t, ov.start, "exact")
        trace.record(time.perf_counter() - t0, p.length, 1)
        p.trace = trace
        return ExactResult(p, trace, 1, exhausted=True, elapsed=time.perf_counter() - t0,
                           nodes=0, lower_bound=p.length)

    _require_inside(dec, margins, ov.start, w_in, "start")
    _require_inside(dec, margins, ov.goal, w_t, "goal")
    if incumbent is None:
        warm = ksp_socp(graph, dec, PathQuery(w_in, w_t, query.eps, None, 3), margins, engine)
        if warm.path is None:
            return ExactResult(None, trace, 0, "no-path", elapsed=time.perf_counter() - t0)
        incumbent = warm.path
    best = incumbent
    trace.record(time.perf_counter() - t0, best.length, 0)

    start = ov.start
    heap = [(float(np.linalg.norm(w_t - w_in)), 1, (start,))]
    nodes = 0
    while heap:
        bound, _, prefix = heapq.heappop(heap)
        if bound >= best.length:
            heap.clear()
            break
        last = prefix[-1]
        for n, _e in graph.neighbors(last):
            if n in prefix:
                continue
            child = prefix + (n,)
            nodes += 1
            if nodes > node_cap:
                lb = min([bound] + [h[0] for h in heap])
                raise ResourceError(
                    f"branch-and-bound node cap {node_cap} reached; incumbent {best.length:.6f} m, "
                    f"bound {lb:.6f} m", best, lb)
            if n == ov.goal:
                p = socp_shortest_path(child, dec, margins, w_in, w_t, engine)
                if p.length < best.length:
                    best = p
                    trace.record(time.perf_counter() - t0, p.length, nodes)
                continue
            b = prefix_bound(child, dec, margins, w_in, w_t, engine)
            if b < best.length:
                heapq.heappush(heap, (b, len(child), child))
    best.planner, best.trace = "exact", trace
    best.meta = {"nodes": nodes}
    return ExactResult(best, trace, 0, exhausted=True, elapsed=time.perf_counter() - t0,
                       nodes=nodes, lower_bound=best.length)


def exhaustive_shortest_path(graph: ConnectivityGraph, dec: Decomposition, query: PathQuery,
                             margins: np.ndarray, limit: int = 200, engine=None
                             ) -> Optional[Tuple[Path, int]]:
    """Solve every loopless sequence; None when there are more than ``limit``."""
    from .search import all_simple_paths

    ov = query_overlay(graph, query.w_in, query.w_t, dec)
    wg = WeightedGraph.from_overlay(graph, ov)
    seqs = all_simple_paths(wg, ov.start, ov.goal, limit=limit)
    if len(seqs) > limit:
        return None
    best = None
    for s in seqs:
        p = socp_shortest_path(s, dec, margins, query.w_in, query.w_t, engine)
        if best is None or p.length < best.length:
            best = p
    return best, len(seqs)
