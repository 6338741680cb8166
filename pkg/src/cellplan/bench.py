"""Experiment harness: decomposition scaling and planner comparison."""
from __future__ import annotations

import csv
import math
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .baseline import theta_star
from .cellgraph import ConnectivityGraph, compute_margins, prepare_graph
from .decomp import Decomposition, decompose
from .errors import QueryError, ResourceError
from .grid import OccupancyGrid, WorldSpec, generate_city_world
from .optimize import PathQuery, astar_socp, exact_shortest_path, ksp_socp

PLANNERS = ("theta", "astar-socp", "ksp-socp", "exact")
MONOTONE_RTOL = 1e-6


def memory_estimate(n_cells: int, n_edges: int) -> int:
    """Bytes for C (6 per cell), o (1), Q (3), the edge list (2 per edge) and c (1),
    all stored as 64-bit values."""
    return 8 * (6 * n_cells + n_cells + 3 * n_cells + 2 * n_edges + n_edges)


@dataclass
class BenchRecord:
    L: int
    H: int
    block: int
    seed: int
    planner: str = ""
    cell_count: int = 0
    edge_count: int = 0
    memory_bytes: int = 0
    decomposition_time: float = float("nan")
    length: float = float("nan")
    solve_time: float = float("nan")
    k: int = 0
    status: str = "ok"
    truncated: bool = False
    expansions: int = 0
    trace: List[Tuple[float, float, int]] = field(default_factory=list)

    # columns that do not depend on wall-clock time
    STABLE = ("L", "H", "block", "seed", "planner", "cell_count", "edge_count", "memory_bytes",
              "length", "k", "status", "truncated", "expansions")
    TIMED = ("L", "H", "block", "seed", "planner", "decomposition_time", "solve_time")


@dataclass
class DecompositionSuite:
    records: List[BenchRecord]
    coefficient: float                  # N_c ~ coefficient * L^2
    r2: float
    time_coefficient: float             # T_c ~ time_coefficient * L^2
    edge_stats: Dict[str, float]


def quadratic_fit(L: Sequence[float], y: Sequence[float]) -> Tuple[float, float]:
    """Least squares ``y ~ a L^2`` through the origin; returns ``(a, R^2)``."""
    x = np.asarray(L, dtype=float) ** 2
    y = np.asarray(y, dtype=float)
    a = float(x @ y / (x @ x))
    ss_res = float(((y - a * x) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return a, r2


def edge_statistics(degrees: Sequence[int]) -> Dict[str, float]:
    d = np.asarray(degrees, dtype=float)
    if len(d) == 0:
        return {"mean": 0.0, "median": 0.0, "min": 0.0, "max": 0.0}
    return {"mean": float(d.mean()), "median": float(np.median(d)),
            "min": float(d.min()), "max": float(d.max())}


def world_record(spec: WorldSpec) -> Tuple[BenchRecord, OccupancyGrid, Decomposition, ConnectivityGraph, np.ndarray]:
    grid = generate_city_world(spec)
    t0 = time.perf_counter()
    dec = decompose(grid)
    t_dec = time.perf_counter() - t0
    graph, margins = prepare_graph(dec, grid)
    rec = BenchRecord(spec.L, spec.H, spec.block, spec.seed, "decompose", dec.cell_count,
                      graph.n_edges, memory_estimate(dec.cell_count, graph.n_edges), t_dec)
    return rec, grid, dec, graph, margins


def run_decomposition_suite(sizes: Sequence[int], H: int, seeds: Sequence[int],
                            block: int = 50) -> DecompositionSuite:
    records, degrees = [], []
    for L in sizes:
        for s in seeds:
            rec, _, _, graph, _ = world_record(WorldSpec(L=int(L), H=H, block=block, seed=int(s)))
            records.append(rec)
            degrees.extend(graph.degrees().tolist())
    Ls = [r.L for r in records]
    a, r2 = quadratic_fit(Ls, [r.cell_count for r in records])
    at, _ = quadratic_fit(Ls, [r.decomposition_time for r in records])
    return DecompositionSuite(records, a, r2, at, edge_statistics(degrees))


def default_query(grid: OccupancyGrid) -> PathQuery:
    """(1, 1, 1) m to (L-1, L-1, H-1) m, scaled by the resolution."""
    ext = grid.extent
    r = grid.resolution
    return PathQuery(np.full(3, r), ext - r)


def run_planner_suite(base: BenchRecord, grid: OccupancyGrid, dec: Decomposition,
                      graph: ConnectivityGraph, margins: np.ndarray, query: PathQuery,
                      planners: Sequence[str] = PLANNERS, deadline: Optional[float] = None,
                      k_max: Optional[int] = None, node_cap: int = 200_000) -> List[BenchRecord]:
    """One record per planner; asserts exact <= KSP-SOCP <= A*-SOCP on finished runs."""
    out: List[BenchRecord] = []
    lengths: Dict[str, float] = {}

    def rec(name: str) -> BenchRecord:
        r = BenchRecord(base.L, base.H, base.block, base.seed, name, base.cell_count,
                        base.edge_count, base.memory_bytes, base.decomposition_time)
        out.append(r)
        return r

    for name in planners:
        r = rec(name)
        t0 = time.perf_counter()
        try:
            if name == "theta":
                p = theta_star(grid, query.w_in, query.w_t)
                r.solve_time = time.perf_counter() - t0
                if p is None:
                    r.status = "no-path"
                else:
                    r.length, r.expansions = p.length, p.expansions
                continue
            if name == "astar-socp":
                res = astar_socp(graph, dec, query, margins)
            elif name == "ksp-socp":
                q = PathQuery(query.w_in, query.w_t, query.eps, deadline, k_max)
                res = ksp_socp(graph, dec, q, margins)
            elif name == "exact":
                res = exact_shortest_path(graph, dec, query, margins, node_cap=node_cap)
            else:
                raise ValueError(f"unknown planner {name!r}")
        except ResourceError as e:
            r.solve_time = time.perf_counter() - t0
            r.status = "resource-error"
            r.length = e.incumbent.length if e.incumbent is not None else float("nan")
            continue
        except QueryError:
            r.solve_time = time.perf_counter() - t0
            r.status = "infeasible"
            continue
        r.solve_time = time.perf_counter() - t0
        r.status = res.status
        r.k = res.k
        r.truncated = res.truncated
        r.trace = list(res.trace.samples)
        if res.path is not None:
            r.length = res.path.length
            lengths[name] = r.length

    chain = [n for n in ("exact", "ksp-socp", "astar-socp") if n in lengths]
    for a, b in zip(chain, chain[1:]):
        assert lengths[a] <= lengths[b] * (1 + MONOTONE_RTOL), \
            f"monotonicity violated: {a}={lengths[a]} > {b}={lengths[b]}"
    return out


def write_csv(records: Sequence[BenchRecord], path: str, columns: Sequence[str] = BenchRecord.STABLE) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for r in records:
            row = []
            for c in columns:
                v = getattr(r, c)
                row.append(repr(float(v)) if isinstance(v, float) else v)
            w.writerow(row)


def write_trace(record: BenchRecord, path: str) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("time", "length", "k"))
        for t, length, k in record.trace:
            w.writerow((repr(t), repr(length), k))
