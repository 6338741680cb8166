import numpy as np
import pytest

from cellplan.cellgraph import (MIN_WEIGHT, ConnectivityGraph, assign_weights, build_graph,
                                check_margins, compute_margins, eq5_objective, locate_cell,
                                optimize_representative_points, prepare_graph, query_overlay,
                                shrunk_box)
from cellplan.decomp import Decomposition, decompose
from cellplan.errors import MarginError, QueryError
from cellplan.grid import WorldSpec, generate_city_world, new_grid
from cellplan.verify import face_adjacent_pairs, hull_sweep_hits

from conftest import box_world


def test_uniform_grid_single_vertex():
    g = new_grid((4, 4, 4))
    graph = build_graph(decompose(g), g)
    assert graph.vertices.tolist() == [1] and graph.n_edges == 0


def test_obstacle_separates():
    g = new_grid((3, 1, 1))
    g[2, 1, 1] = 1
    graph = build_graph(decompose(g), g)
    assert graph.vertices.tolist() == [1, 3] and graph.n_edges == 0


def _brute_force_edges(grid, dec):
    """All free pairs sharing a face whose hull misses every occupied voxel."""
    occ_vox = np.argwhere(grid.occupancy)
    out = set()
    for i, j in face_adjacent_pairs(dec.lo, dec.hi):
        if dec.occ[i] or dec.occ[j]:
            continue
        a0, a1, b0, b1 = dec.lo[i] - 1, dec.hi[i], dec.lo[j] - 1, dec.hi[j]
        bb0, bb1 = np.minimum(a0, b0), np.maximum(a1, b1)
        near = occ_vox[np.all((occ_vox >= bb0) & (occ_vox < bb1), axis=1)]
        if len(near) == 0 or not hull_sweep_hits(a0, a1, b0, b1, near).any():
            out.add((int(i) + 1, int(j) + 1))
    return out


def test_edges_match_brute_force_full_scale():
    g = generate_city_world(WorldSpec(L=100, H=200, block=50, seed=1))
    dec = decompose(g)
    graph = build_graph(dec, g)
    assert {tuple(e) for e in graph.edges.tolist()} == _brute_force_edges(g, dec)


@pytest.mark.parametrize("seed", range(4))
def test_edges_match_brute_force_small(seed):
    g = box_world(seed)
    dec = decompose(g)
    assert {tuple(e) for e in build_graph(dec, g).edges.tolist()} == _brute_force_edges(g, dec)


# ---------------------------------------------------------------------------
# margins


def test_margins_only_on_obstacle_faces():
    g = new_grid((6, 3, 3))
    g.fill_box((4, 1, 1), (6, 3, 3))
    dec = decompose(g)
    m = compute_margins(dec, g, 0.5)
    free = [n for n in dec.free_ids()]
    assert len(free) == 1
    np.testing.assert_allclose(m[free[0] - 1], [0, 0, 0, 0.5, 0, 0])
    assert not m[dec.occ].any()


def test_margin_clamp_keeps_tenth():
    g = new_grid((3, 1, 1))
    g[1, 1, 1] = 1
    g[3, 1, 1] = 1
    dec = decompose(g)
    m = compute_margins(dec, g, 1.0)
    lo, hi = shrunk_box(dec, m, 2)
    assert hi[0] - lo[0] == pytest.approx(0.1)
    check_margins(dec, m)


def test_margin_error_names_cells():
    g = new_grid((2, 1, 1))
    dec = decompose(g)
    m = np.array([[1.2, 0, 0, 1.2, 0, 0]])
    with pytest.raises(MarginError) as e:
        check_margins(dec, m)
    assert e.value.cells == [1]


# ---------------------------------------------------------------------------
# representative points and weights


def test_no_edges_gives_centres():
    g = new_grid((2, 2, 2))
    dec = decompose(g)
    graph = build_graph(dec, g)
    pts = optimize_representative_points(graph, dec, np.zeros((dec.cell_count, 6)))
    np.testing.assert_allclose(pts[0], [1, 1, 1])
    assert graph.objective == 0.0


def test_portal_points_coincide():
    # two free cells sharing the plane x = 1 m; anchors meet on it
    g = new_grid((4, 3, 1))
    dec = Decomposition(np.array([[1, 1, 1], [2, 1, 1]]), np.array([[1, 3, 1], [4, 3, 1]]),
                        np.array([0, 0], dtype=bool), g.dims)
    graph = build_graph(dec, g)
    assert graph.edges.tolist() == [[1, 2]]
    pts = optimize_representative_points(graph, dec, np.zeros((2, 6)))
    assert graph.objective == pytest.approx(0.0, abs=1e-6)
    assert pts[0][0] == pytest.approx(1.0, abs=1e-6) and pts[1][0] == pytest.approx(1.0, abs=1e-6)
    assign_weights(graph)
    assert graph.weights[0] == pytest.approx(MIN_WEIGHT, abs=1e-6)
    assert graph.weights[0] >= MIN_WEIGHT


def test_eq5_matches_smoothed_descent():
    from scipy.optimize import minimize

    for seed in range(3):
        g = box_world(seed, dims=(12, 12, 6))
        dec = decompose(g)
        graph = build_graph(dec, g)
        m = compute_margins(dec, g, 0.5)
        optimize_representative_points(graph, dec, m)
        rows = np.array([[graph.row(i), graph.row(j)] for i, j in graph.edges])
        lb = np.concatenate([shrunk_box(dec, m, v)[0] for v in graph.vertices])
        ub = np.concatenate([shrunk_box(dec, m, v)[1] for v in graph.vertices])
        x = 0.5 * (lb + ub)
        for delta in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7):
            def f(x, delta=delta):
                P = x.reshape(-1, 3)
                d = P[rows[:, 0]] - P[rows[:, 1]]
                s = np.sqrt((d * d).sum(axis=1) + delta * delta)
                gq = d / s[:, None]
                grad = np.zeros_like(P)
                np.add.at(grad, rows[:, 0], gq)
                np.add.at(grad, rows[:, 1], -gq)
                return float(s.sum()), grad.ravel()
            x = minimize(f, x, jac=True, method="L-BFGS-B", bounds=list(zip(lb, ub)),
                         options={"maxiter": 20000, "ftol": 1e-15, "gtol": 1e-12}).x
        ref = eq5_objective(graph, x.reshape(-1, 3))
        assert graph.objective == pytest.approx(ref, rel=1e-4, abs=1e-6)
        assert graph.objective <= ref + 1e-6


def test_weights_are_recomputed_norms():
    g = generate_city_world(WorldSpec(L=50, H=40, block=25, seed=3))
    dec = decompose(g)
    graph, _ = prepare_graph(dec, g)
    for (i, j), w in zip(graph.edges, graph.weights):
        d = np.linalg.norm(graph.point(i) - graph.point(j))
        assert w == pytest.approx(max(d, MIN_WEIGHT), rel=1e-12)


def test_weight_three_meters():
    graph = ConnectivityGraph(np.array([1, 2]), np.array([[1, 2]]), np.zeros(1),
                              np.array([[0.0, 0, 0], [0, 3.0, 0]]))
    assign_weights(graph)
    assert graph.weights.tolist() == [3.0]


# ---------------------------------------------------------------------------
# query overlay


@pytest.fixture(scope="module")
def city():
    g = generate_city_world(WorldSpec(L=50, H=40, block=25, seed=8))
    dec = decompose(g)
    graph, m = prepare_graph(dec, g)
    return g, dec, graph, m


def test_same_cell_overlay_empty(city):
    g, dec, graph, _ = city
    ov = query_overlay(graph, (1, 1, 39), (2, 2, 39), dec)
    assert ov.start == ov.goal and ov.weights == {}


def test_overlay_identity_at_anchor(city):
    g, dec, graph, m = city
    # an anchor that locates back to its own cell (anchors on shared faces may not)
    v = next(int(v) for v in graph.vertices
             if graph.neighbors(int(v)) and locate_cell(dec, graph.point(int(v))) == v)
    far = next(int(u) for u in graph.vertices[::-1] if not graph.adjacent(v, int(u)) and u != v)
    goal = np.mean(shrunk_box(dec, m, far), axis=0)
    ov = query_overlay(graph, graph.point(v), goal, dec)
    assert ov.start == v
    for n, e in graph.neighbors(v):
        assert ov.weight(graph, e) == pytest.approx(graph.weights[e], rel=1e-12)


def test_overlay_recomputed(city):
    g, dec, graph, m = city
    rng = np.random.default_rng(0)
    for _ in range(20):
        a, b = rng.choice(graph.vertices, 2, replace=False)
        w_in = rng.uniform(*shrunk_box(dec, m, int(a)))
        w_t = rng.uniform(*shrunk_box(dec, m, int(b)))
        ov = query_overlay(graph, w_in, w_t, dec)
        for e, (i, j) in enumerate(graph.edges):
            pi = w_in if i == ov.start else w_t if i == ov.goal else graph.point(i)
            pj = w_in if j == ov.start else w_t if j == ov.goal else graph.point(j)
            assert ov.weight(graph, e) == pytest.approx(max(np.linalg.norm(pi - pj), MIN_WEIGHT), rel=1e-12)


def test_locate_errors(city):
    g, dec, graph, _ = city
    with pytest.raises(QueryError, match="outside"):
        locate_cell(dec, (-1, 0, 0))
    occ = np.argwhere(g.occupancy)[0] + 0.5
    with pytest.raises(QueryError, match="obstacle"):
        locate_cell(dec, occ)


def test_graph_roundtrip(city):
    _, _, graph, _ = city
    h = ConnectivityGraph.loads(graph.dumps())
    np.testing.assert_array_equal(h.edges, graph.edges)
    np.testing.assert_array_equal(h.weights, graph.weights)
    np.testing.assert_array_equal(h.points, graph.points)
