"""Acceptance checks, one test per criterion.

Each test records a PASS/FAIL line with the measured numbers; the lines are
printed in the terminal summary (see ``pytest_terminal_summary`` below).
"""
import os
import time

import numpy as np
import pytest

from cellplan import cli
from cellplan.baseline import theta_star
from cellplan.bench import default_query, run_decomposition_suite, run_planner_suite, world_record
from cellplan.cellgraph import prepare_graph, shrunk_box
from cellplan.decomp import decompose
from cellplan.grid import WorldSpec, generate_city_world
from cellplan.optimize import (PathQuery, astar_socp, check_feasibility, exact_shortest_path,
                               exhaustive_shortest_path, ksp_socp, socp_shortest_path)
from cellplan.verify import PROPERTIES, verify_decomposition

from conftest import (box_world, boxes_of, lattice_dp, polyline_collisions, random_corridor,
                      smoothed_descent)

pytestmark = pytest.mark.slow

RESULTS = {}


def record(n, ok, detail):
    RESULTS[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(RESULTS[n])
    return ok


# ---------------------------------------------------------------------------
# 1 + 2: verification and topology on 50 generated worlds

WORLDS_50 = ([WorldSpec(L=20, H=20, block=10, seed=s) for s in range(17)]
             + [WorldSpec(L=50, H=50, block=50, seed=s) for s in range(17)]
             + [WorldSpec(L=100, H=100, block=50, seed=s) for s in range(16)])


@pytest.fixture(scope="module")
def fifty_reports():
    t0 = time.perf_counter()
    out = []
    for spec in WORLDS_50:
        grid = generate_city_world(spec)
        dec = decompose(grid)
        out.append((spec, verify_decomposition(grid, dec)))
    return out, time.perf_counter() - t0


def test_criterion_01_properties(fifty_reports):
    reports, elapsed = fifty_reports
    bad = [(s.L, s.seed, [p for p in PROPERTIES if not r[p].passed]) for s, r in reports if not r.passed]
    ok = not bad and elapsed <= 300.0
    assert record(1, ok, f"{len(reports)} worlds, failures={bad}, {elapsed:.1f} s (limit 300 s)")


def test_criterion_02_topology(fifty_reports):
    reports, _ = fifty_reports
    mism = [(s.L, s.seed, r.free_components, r.visibility_components)
            for s, r in reports if r.free_components != r.visibility_components]
    assert record(2, not mism, f"{len(reports)} worlds, mismatches={mism}")


# ---------------------------------------------------------------------------
# 3: quadratic cell-count scaling


def test_criterion_03_quadratic_scaling():
    suite = run_decomposition_suite([50, 100, 150, 200], H=200, seeds=range(5))
    ok = suite.r2 >= 0.9
    assert record(3, ok, f"R^2={suite.r2:.4f} (>= 0.9), N_c ~ {suite.coefficient:.4f} L^2, "
                         f"degree {suite.edge_stats}")


# ---------------------------------------------------------------------------
# 4: feasibility check is sufficient for collision freedom


def _random_candidate(rng, graph, dec, margins):
    v = int(rng.choice(graph.vertices))
    S = [v]
    for _ in range(int(rng.integers(1, 7))):
        nb = graph.neighbors(S[-1])
        if not nb or rng.random() < 0.1:
            S.append(S[-1])
        else:
            S.append(int(nb[rng.integers(len(nb))][0]))
    W = []
    for c in S:
        lo, hi = shrunk_box(dec, margins, c)
        u = rng.random(3)
        # pull some coordinates onto faces and corners, the riskiest spots
        u = np.where(rng.random(3) < 0.3, np.round(u), u)
        W.append(lo + u * (hi - lo))
    if rng.random() < 0.2:
        W[rng.integers(len(W))] += rng.normal(0, 0.5, 3)
    return W, S


def test_criterion_04_feasibility_sufficiency():
    rng = np.random.default_rng(4)
    accepted = collisions = rejected = 0
    w = 0
    while accepted < 1000:
        grid = generate_city_world(WorldSpec(L=20, H=10, block=10, seed=w)) if w % 2 else box_world(w)
        eps = (0.0, 0.25, 0.5, 1.0)[w % 4]
        dec = decompose(grid)
        graph, margins = prepare_graph(dec, grid, eps=eps)
        w += 1
        for _ in range(50):
            W, S = _random_candidate(rng, graph, dec, margins)
            if not check_feasibility(W, S, graph, dec, margins):
                rejected += 1
                continue
            accepted += 1
            collisions += polyline_collisions(grid, W)
    assert record(4, collisions == 0, f"{accepted} accepted paths on {w} worlds "
                                      f"({rejected} rejected), colliding samples={collisions}")


# ---------------------------------------------------------------------------
# 5: fixed-sequence optimality against two oracles


def test_criterion_05_fixed_sequence():
    rng = np.random.default_rng(5)
    worst_dp = worst_sd = 0.0
    below_lattice = 0
    for _ in range(100):
        dec = random_corridor(rng)
        margins = np.zeros((dec.cell_count, 6))
        cells = list(range(1, dec.cell_count + 1))
        B = boxes_of(dec, margins, cells)
        w_in, w_t = rng.uniform(*B[0]), rng.uniform(*B[-1])
        L = socp_shortest_path(cells, dec, margins, w_in, w_t).length
        dp = lattice_dp(B, w_in, w_t, 0.05)
        sd = smoothed_descent(B, w_in, w_t)
        below_lattice += L > dp + 1e-9    # the lattice is feasible, so it can't beat the optimum
        worst_dp = max(worst_dp, abs(dp - L) / L)
        worst_sd = max(worst_sd, abs(sd - L) / L)
    ok = worst_dp <= 0.02 and worst_sd <= 1e-4 and below_lattice == 0
    assert record(5, ok, f"100 corridors, max DP rel diff {worst_dp:.4f} (<= 0.02), "
                         f"max descent rel diff {worst_sd:.2e} (<= 1e-4), lattice beats conic {below_lattice}x")


# ---------------------------------------------------------------------------
# 6: exact == exhaustive, and exact <= KSP(k=10) <= A*


def _random_query(rng, graph, dec, margins):
    a, b = rng.choice(graph.vertices, 2, replace=False)
    return PathQuery(*(rng.uniform(*shrunk_box(dec, margins, int(c))) for c in (a, b)))


def test_criterion_06_exactness_chain():
    rng = np.random.default_rng(6)
    worst = 0.0
    chain_bad = []
    n = seed = 0
    while n < 30:
        grid = box_world(seed, n_boxes=(2, 4))
        seed += 1
        dec = decompose(grid)
        graph, margins = prepare_graph(dec, grid)
        q = _random_query(rng, graph, dec, margins)
        ex = exhaustive_shortest_path(graph, dec, q, margins, limit=5000)
        if ex is None:
            continue   # too many loopless sequences to enumerate
        n += 1
        best, _ = ex
        e = exact_shortest_path(graph, dec, q, margins)
        k = ksp_socp(graph, dec, PathQuery(q.w_in, q.w_t, k_max=10), margins)
        a = astar_socp(graph, dec, q, margins)
        worst = max(worst, abs(e.length - best.length) / best.length)
        if not (e.length <= k.length * (1 + 1e-9) and k.length <= a.length * (1 + 1e-9)):
            chain_bad.append((seed - 1, e.length, k.length, a.length))
    ok = worst <= 1e-6 and not chain_bad
    assert record(6, ok, f"30 worlds 20x20x10 (seeds scanned {seed}), max rel diff {worst:.2e} (<= 1e-6), "
                         f"chain violations={chain_bad}")


# ---------------------------------------------------------------------------
# 7: KSP improves on the single A* sequence


def test_criterion_07_ksp_improvement(corridor_world):
    dec = decompose(corridor_world)
    graph, margins = prepare_graph(dec, corridor_world, eps=0.5)
    w_in, w_t = (1.5, 11.5, 2.5), (18.5, 6.5, 2.5)
    k1 = ksp_socp(graph, dec, PathQuery(w_in, w_t, eps=0.5, k_max=1), margins)
    k10 = ksp_socp(graph, dec, PathQuery(w_in, w_t, eps=0.5, k_max=10), margins)
    first_better = next((kk for _, length, kk in k10.trace.samples if length < k1.length - 1e-6), None)
    ok = k10.length < k1.length - 1e-6 and first_better is not None and first_better >= 2
    assert record(7, ok, f"k=1 {k1.length:.4f}, k=10 {k10.length:.4f}, first improvement at k={first_better}")


# ---------------------------------------------------------------------------
# 8: A*-SOCP within 35% of Theta*


def test_criterion_08_astar_vs_theta():
    ratios = []
    for s in range(10):
        spec = WorldSpec(L=100, H=200, block=50, seed=s)
        _, grid, dec, graph, margins = world_record(spec)
        q = default_query(grid)
        a = astar_socp(graph, dec, q, margins)
        t = theta_star(grid, q.w_in, q.w_t)
        ratios.append(a.length / t.length)
    good = sum(r <= 1.35 for r in ratios)
    assert record(8, good >= 9, f"{good}/10 within 1.35, ratios {[round(r, 3) for r in ratios]}")


# ---------------------------------------------------------------------------
# 9: memory accounting


def test_criterion_09_memory_identity():
    bad = []
    runs = 0
    for spec in [WorldSpec(L=20, H=10, block=10, seed=s) for s in range(6)] + \
                [WorldSpec(L=50, H=50, block=50, seed=s) for s in range(3)]:
        rec, grid, dec, graph, margins = world_record(spec)
        rows = run_planner_suite(rec, grid, dec, graph, margins, default_query(grid),
                                 ("astar-socp", "ksp-socp"), k_max=3)
        for r in [rec] + rows:
            runs += 1
            expect = 8 * (10 * dec.cell_count + 3 * len(graph.edges))
            if r.memory_bytes != expect:
                bad.append((spec.L, spec.seed, r.planner, r.memory_bytes, expect))
    assert record(9, not bad, f"{runs} records, mismatches={bad}")


# ---------------------------------------------------------------------------
# 10: byte-identical reruns


PIPELINE = [
    ["gen", "--L", "20", "--H", "10", "--block", "10", "--seed", "3", "-o", "w.og3d"],
    ["decompose", "w.og3d", "-o", "w.decomp.json", "--graph"],
    ["plan", "--grid", "w.og3d", "--decomp", "w.decomp.json", "--graph", "w.graph.json",
     "--planner", "ksp-socp", "--kmax", "5", "--start", "1,1,1", "--goal", "19,19,9", "-o", "ksp.path.json"],
    ["plan", "--grid", "w.og3d", "--decomp", "w.decomp.json", "--planner", "exact",
     "--start", "1,1,1", "--goal", "19,19,9", "-o", "exact.path.json"],
    ["plan", "--grid", "w.og3d", "--planner", "theta", "--start", "1,1,1", "--goal", "19,19,9",
     "-o", "theta.path.json"],
    ["export", "w.decomp.json", "--format", "obj", "-o", "w.obj"],
    ["bench", "--L", "20", "--H", "10", "--block", "10", "--seeds", "0", "1", "--kmax", "3", "-o", "bench"],
]
# wall-clock columns are the only permitted differences
TIMED = {"bench/timings.csv"}


def _run_pipeline(d, monkeypatch):
    d.mkdir()
    monkeypatch.chdir(d)
    for argv in PIPELINE:
        assert cli.main(argv) == 0, argv
    files = {}
    for root, _, names in os.walk(d):
        for name in names:
            p = os.path.join(root, name)
            rel = os.path.relpath(p, d)
            if rel in TIMED or rel.startswith("bench/traces"):
                continue
            with open(p, "rb") as f:
                files[rel] = f.read()
    return files


def test_criterion_10_determinism(tmp_path, monkeypatch):
    a = _run_pipeline(tmp_path / "a", monkeypatch)
    b = _run_pipeline(tmp_path / "b", monkeypatch)
    diff = sorted(k for k in set(a) | set(b) if a.get(k) != b.get(k))
    ok = not diff and len(a) >= 10
    assert record(10, ok, f"{len(a)} output files compared, differing={diff}")
