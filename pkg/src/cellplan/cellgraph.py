"""Connectivity graph over free cells: edges, margins, anchor points, weights."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .conic import SumOfNorms, default_engine, ConicEngine
from .decomp import Decomposition, FACES, _face_slab, _slices
from .errors import MarginError, QueryError
from .geometry import SAT_TOL, hull_axes
from .grid import OccupancyGrid

GRAPH_FORMAT = "cellplan.graph/1"
MIN_WEIGHT = 1e-9
DEFAULT_EPS = 1.0
CLAMP_KEEP = 0.1  # fraction of the extent kept when opposing margins collide


@dataclass
class ConnectivityGraph:
    vertices: np.ndarray                  # free cell ids, ascending
    edges: np.ndarray                     # (E, 2) cell ids, i < j, sorted
    weights: Optional[np.ndarray] = None  # meters, per edge
    points: Optional[np.ndarray] = None   # (V, 3) meters, aligned with vertices
    objective: float = float("nan")
    gap: float = float("nan")
    _index: Dict[int, int] = field(default_factory=dict, repr=False)
    _adj: Optional[Dict[int, List[Tuple[int, int]]]] = field(default=None, repr=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.int64)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self._index = {int(v): i for i, v in enumerate(self.vertices)}

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def __contains__(self, v: int) -> bool:
        return int(v) in self._index

    def row(self, v: int) -> int:
        return self._index[int(v)]

    def point(self, v: int) -> np.ndarray:
        return self.points[self._index[int(v)]]

    def neighbors(self, v: int) -> List[Tuple[int, int]]:
        """``(neighbor id, edge row)`` pairs in ascending neighbor id."""
        if self._adj is None:
            adj: Dict[int, List[Tuple[int, int]]] = {int(u): [] for u in self.vertices}
            for e, (i, j) in enumerate(self.edges):
                adj[int(i)].append((int(j), e))
                adj[int(j)].append((int(i), e))
            for lst in adj.values():
                lst.sort()
            self._adj = adj
        return self._adj[int(v)]

    def adjacent(self, i: int, j: int) -> bool:
        """U(i, j)."""
        if i == j or int(i) not in self._index:
            return False
        return any(n == int(j) for n, _ in self.neighbors(i))

    def degrees(self) -> np.ndarray:
        return np.array([len(self.neighbors(v)) for v in self.vertices], dtype=np.int64)

    def to_dict(self) -> dict:
        pts = self.points if self.points is not None else None
        return {
            "format": GRAPH_FORMAT,
            "objective": None if math.isnan(self.objective) else self.objective,
            "gap": None if math.isnan(self.gap) else self.gap,
            "vertices": [{"cell": int(v), "point": None if pts is None else [float(x) for x in pts[i]]}
                         for i, v in enumerate(self.vertices)],
            "edges": [{"cells": [int(i), int(j)],
                       "weight": None if self.weights is None else float(self.weights[e])}
                      for e, (i, j) in enumerate(self.edges)],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ConnectivityGraph":
        if doc.get("format") != GRAPH_FORMAT:
            raise ValueError(f"not a graph document: format={doc.get('format')!r}")
        verts = [v["cell"] for v in doc["vertices"]]
        edges = [e["cells"] for e in doc["edges"]]
        g = cls(np.array(verts, dtype=np.int64), np.array(edges, dtype=np.int64).reshape(-1, 2))
        if doc["vertices"] and doc["vertices"][0]["point"] is not None:
            g.points = np.array([v["point"] for v in doc["vertices"]], dtype=float)
        if doc["edges"] and doc["edges"][0]["weight"] is not None:
            g.weights = np.array([e["weight"] for e in doc["edges"]], dtype=float)
        elif not doc["edges"] and g.points is not None:
            g.weights = np.zeros(0)
        g.objective = float("nan") if doc.get("objective") is None else doc["objective"]
        g.gap = float("nan") if doc.get("gap") is None else doc["gap"]
        return g

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "ConnectivityGraph":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Graph construction


def _touching(dec: Decomposition) -> List[Tuple[int, int]]:
    """Face-adjacent cell pairs read off the coverage map (ids, i < j)."""
    cov = dec.coverage
    pairs = set()
    for n in range(1, dec.cell_count + 1):
        lo, hi = dec.lo[n - 1], dec.hi[n - 1]
        for k in range(3, 6):  # +x, +y, +z faces cover every pair once
            slab = _face_slab(lo, hi, k, dec.dims)
            if slab is None:
                continue
            for m in np.unique(cov[_slices(*slab)]):
                a, b = sorted((n, int(m)))
                pairs.add((a, b))
    return sorted(pairs)


def hull_obstructed(dec: Decomposition, i: int, j: int,
                    obs_lo: np.ndarray, obs_hi: np.ndarray) -> bool:
    """Does hull(cell i u cell j) overlap any obstacle box with positive volume?

    ``obs_lo/obs_hi`` are continuous voxel-unit boxes of the obstacle cells.
    """
    a_lo, a_hi = dec.lo[i - 1] - 1.0, dec.hi[i - 1].astype(float)
    b_lo, b_hi = dec.lo[j - 1] - 1.0, dec.hi[j - 1].astype(float)
    bb_lo = np.minimum(a_lo, b_lo)
    bb_hi = np.maximum(a_hi, b_hi)
    # broad phase: obstacle boxes overlapping the hull's bounding box
    near = np.all((obs_lo < bb_hi - SAT_TOL) & (obs_hi > bb_lo + SAT_TOL), axis=1)
    if not near.any():
        return False
    axes, hmin, hmax = hull_axes(a_lo, a_hi, b_lo, b_hi)
    return kernels.hull_hits_boxes(np.ascontiguousarray(obs_lo[near]), np.ascontiguousarray(obs_hi[near]),
                                   axes, hmin, hmax, SAT_TOL)


def build_graph(dec: Decomposition, grid: Optional[OccupancyGrid] = None) -> ConnectivityGraph:
    """Vertices are free cells; edges join face-adjacent free cells with an obstacle-free hull."""
    obs = np.flatnonzero(dec.occ)
    obs_lo = (dec.lo[obs] - 1).astype(float)
    obs_hi = dec.hi[obs].astype(float)
    edges = []
    for i, j in _touching(dec):
        if dec.occ[i - 1] or dec.occ[j - 1]:
            continue
        if not hull_obstructed(dec, i, j, obs_lo, obs_hi):
            edges.append((i, j))
    return ConnectivityGraph(dec.free_ids(), np.array(edges, dtype=np.int64).reshape(-1, 2))


# ---------------------------------------------------------------------------
# Margins


def compute_margins(dec: Decomposition, grid: OccupancyGrid, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Per-cell face margins (N_c, 6) in meters, faces ordered -x,-y,-z,+x,+y,+z.

    A free cell gets ``eps`` on each face whose outside slab is occupied and 0
    elsewhere; obstacle cells get 0. Opposing margins that would consume the
    extent are scaled down to leave ``CLAMP_KEEP`` of it.
    """
    occ = grid.occupancy
    out = np.zeros((dec.cell_count, 6))
    if eps <= 0:
        return out
    ext = (dec.hi - dec.lo + 1) * dec.resolution
    for n in np.flatnonzero(~dec.occ):
        for k in range(6):
            slab = _face_slab(dec.lo[n], dec.hi[n], k, dec.dims)
            # faces are uniform, so any occupied voxel means an obstacle neighbour
            if slab is not None and occ[_slices(*slab)].any():
                out[n, k] = eps
        for ax in range(3):
            s = out[n, ax] + out[n, ax + 3]
            if s >= ext[n, ax]:
                scale = (1.0 - CLAMP_KEEP) * ext[n, ax] / s
                out[n, ax] *= scale
                out[n, ax + 3] *= scale
    return out


def shrunk_box(dec: Decomposition, margins: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    lo, hi = dec.box_meters(n)
    return lo + margins[n - 1, :3], hi - margins[n - 1, 3:]


def check_margins(dec: Decomposition, margins: np.ndarray, cells: Optional[Sequence[int]] = None) -> None:
    """Raise :class:`MarginError` naming every cell whose shrunk box is empty."""
    ids = dec.free_ids() if cells is None else cells
    bad = []
    for n in ids:
        lo, hi = shrunk_box(dec, margins, int(n))
        if np.any(lo > hi):
            bad.append(int(n))
    if bad:
        raise MarginError(f"margins exceed the extent of cells {bad}", bad)


# ---------------------------------------------------------------------------
# Representative points and weights


def optimize_representative_points(graph: ConnectivityGraph, dec: Decomposition, margins: np.ndarray,
                                   engine: Optional[ConicEngine] = None) -> np.ndarray:
    """Anchor points minimizing the summed edge lengths inside shrunk cells."""
    check_margins(dec, margins, graph.vertices)
    V = len(graph.vertices)
    lb = np.zeros(3 * V)
    ub = np.zeros(3 * V)
    for r, v in enumerate(graph.vertices):
        lb[3 * r:3 * r + 3], ub[3 * r:3 * r + 3] = shrunk_box(dec, margins, int(v))
    pts = 0.5 * (lb + ub).reshape(V, 3)
    graph.objective, graph.gap = 0.0, 0.0
    if graph.n_edges == 0:
        graph.points = pts
        return pts

    # only vertices with edges enter the program; isolated ones keep their centres
    used = np.unique(graph.edges)
    rows = np.array([graph.row(v) for v in used])
    col = {int(v): k for k, v in enumerate(used)}
    sel = (3 * rows[:, None] + np.arange(3)).ravel()
    prob = SumOfNorms(3 * len(used), lb[sel], ub[sel])
    for i, j in graph.edges:
        a, b = col[int(i)], col[int(j)]
        prob.add_difference(range(3 * a, 3 * a + 3), range(3 * b, 3 * b + 3), np.zeros(3))
    sol = (engine or default_engine()).solve(prob)
    pts[rows] = sol.z.reshape(-1, 3)
    graph.points = pts
    graph.objective, graph.gap = sol.value, sol.gap
    return pts


def eq5_objective(graph: ConnectivityGraph, points: np.ndarray) -> float:
    if graph.n_edges == 0:
        return 0.0
    r = np.array([[graph.row(i), graph.row(j)] for i, j in graph.edges])
    return float(np.linalg.norm(points[r[:, 0]] - points[r[:, 1]], axis=1).sum())


def _dist(p, q) -> float:
    return max(float(np.linalg.norm(np.asarray(p, float) - np.asarray(q, float))), MIN_WEIGHT)


def assign_weights(graph: ConnectivityGraph, points: Optional[np.ndarray] = None) -> ConnectivityGraph:
    if points is not None:
        graph.points = np.asarray(points, dtype=float)
    graph.weights = np.array([_dist(graph.point(i), graph.point(j)) for i, j in graph.edges], dtype=float)
    return graph


def prepare_graph(dec: Decomposition, grid: OccupancyGrid, eps: float = DEFAULT_EPS,
                  engine: Optional[ConicEngine] = None) -> Tuple[ConnectivityGraph, np.ndarray]:
    """build_graph + compute_margins + anchors + weights in one call."""
    g = build_graph(dec, grid)
    m = compute_margins(dec, grid, eps)
    optimize_representative_points(g, dec, m, engine)
    assign_weights(g)
    return g, m


# ---------------------------------------------------------------------------
# Query overlay


def locate_cell(dec: Decomposition, p: Sequence[float], name: str = "point") -> int:
    """Id of a free cell whose closed box contains ``p`` (meters)."""
    p = np.asarray(p, dtype=float)
    ext = np.array(dec.dims) * dec.resolution
    if p.shape != (3,) or not np.all(np.isfinite(p)):
        raise QueryError(f"{name} must be three finite coordinates")
    if np.any(p < 0) or np.any(p > ext):
        raise QueryError(f"{name} {p.tolist()} lies outside the grid extent {ext.tolist()}")
    u = p / dec.resolution
    options = []
    for k in range(3):
        f = int(math.floor(u[k]))
        c = [f]
        if abs(u[k] - round(u[k])) <= 1e-9:
            r = int(round(u[k]))
            c = [r, r - 1]
        options.append([i for i in c if 0 <= i < dec.dims[k]])
    cov = dec.coverage
    cands = sorted({int(cov[i, j, k]) for i in options[0] for j in options[1] for k in options[2]})
    free = [n for n in cands if not dec.occ[n - 1]]
    if not free:
        raise QueryError(f"{name} {p.tolist()} lies inside an obstacle")
    return free[0]


@dataclass
class Overlay:
    """Per-query weights: anchors of the start/goal cells move to w_in/w_t."""

    start: int
    goal: int
    w_in: np.ndarray
    w_t: np.ndarray
    weights: Dict[int, float]  # edge row -> overlaid weight

    def anchor(self, graph: ConnectivityGraph, v: int) -> np.ndarray:
        if v == self.start:
            return self.w_in
        if v == self.goal:
            return self.w_t
        return graph.point(v)

    def weight(self, graph: ConnectivityGraph, e: int) -> float:
        return self.weights.get(e, float(graph.weights[e]))


def query_overlay(graph: ConnectivityGraph, w_in, w_t, dec: Decomposition) -> Overlay:
    w_in = np.asarray(w_in, dtype=float)
    w_t = np.asarray(w_t, dtype=float)
    s = locate_cell(dec, w_in, "start")
    t = locate_cell(dec, w_t, "goal")
    ov = Overlay(s, t, w_in, w_t, {})
    if s == t:
        return ov
    for v in (s, t):
        for n, e in graph.neighbors(v):
            ov.weights[e] = _dist(ov.anchor(graph, v), ov.anchor(graph, n))
    return ov
