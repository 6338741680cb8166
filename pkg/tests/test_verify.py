import numpy as np
import pytest

from cellplan.decomp import Decomposition, decompose
from cellplan.grid import WorldSpec, generate_city_world, new_grid
from cellplan.verify import (face_adjacent_pairs, hull_sweep_hits, verify_decomposition,
                             visibility_edges)

from conftest import segment_collisions


def _dec(grid, boxes, occ):
    return Decomposition(np.array([b[0] for b in boxes]), np.array([b[1] for b in boxes]),
                         np.array(occ, dtype=bool), grid.dims, grid.resolution)


def test_overlap_reports_pair():
    g = new_grid((4, 1, 1))
    d = _dec(g, [((1, 1, 1), (3, 1, 1)), ((3, 1, 1), (4, 1, 1))], [0, 0])
    rep = verify_decomposition(g, d)
    assert not rep["P1"].passed
    assert "cells 1 and 2" in rep["P1"].counterexample
    assert not rep["exact_cover"].passed


def test_straddling_cell_fails_p2():
    g = new_grid((3, 1, 1))
    g[2, 1, 1] = 1
    d = _dec(g, [((1, 1, 1), (3, 1, 1))], [0])
    rep = verify_decomposition(g, d)
    assert not rep["P2"].passed and "cell 1" in rep["P2"].counterexample


def test_gap_fails_exact_cover():
    g = new_grid((3, 1, 1))
    d = _dec(g, [((1, 1, 1), (2, 1, 1))], [0])
    rep = verify_decomposition(g, d)
    assert not rep["exact_cover"].passed and rep["P1"].passed


def test_nonuniform_face_fails_p4():
    g = new_grid((2, 2, 1))
    g[2, 1, 1] = 1
    # cell x=1, y=1..2 has +x face touching one free and one occupied voxel
    d = _dec(g, [((1, 1, 1), (1, 2, 1)), ((2, 1, 1), (2, 1, 1)), ((2, 2, 1), (2, 2, 1))], [0, 1, 0])
    rep = verify_decomposition(g, d)
    assert rep["exact_cover"].passed and rep["P2"].passed
    assert not rep["P4"].passed


def test_report_lines_and_dict():
    g = new_grid((3, 3, 3))
    rep = verify_decomposition(g, decompose(g))
    assert rep.passed
    assert len(rep.lines()) == 6 and all("PASS" in line for line in rep.lines())
    assert rep.to_dict()["passed"] is True


def test_face_adjacency_needs_area():
    lo = np.array([[1, 1, 1], [2, 1, 1], [2, 2, 1]])
    hi = np.array([[1, 1, 1], [2, 1, 1], [2, 2, 1]])
    # 1-2 share a face, 2-3 share a face, 1-3 only share an edge
    assert face_adjacent_pairs(lo, hi).tolist() == [[0, 1], [1, 2]]


def test_hull_sweep_against_sampling():
    """Voxels the sweep rejects are never hit by sampled segments between the boxes,
    and voxels between two separated boxes are found."""
    rng = np.random.default_rng(0)
    g = new_grid((6, 6, 1))
    vox = np.array([[i, j, 0] for i in range(6) for j in range(6)])
    for _ in range(15):
        a_lo = np.array([*rng.integers(0, 2, 2), 0.0])
        a_hi = a_lo + [*rng.integers(1, 3, 2), 1]
        b_lo = np.array([*rng.integers(3, 5, 2), 0.0])
        b_hi = b_lo + [1, 1, 1]
        hits = hull_sweep_hits(a_lo, a_hi, b_lo, b_hi, vox)
        pa = rng.uniform(a_lo, a_hi, (150, 3))
        pb = rng.uniform(b_lo, b_hi, (150, 3))
        for (i, j, _), h in zip(vox, hits):
            if h:
                continue
            g.occupancy[:] = False
            g.occupancy[i, j, 0] = True
            assert not any(segment_collisions(g, p, q, step=0.05) for p, q in zip(pa, pb)), (i, j)
        mid = np.floor(0.5 * (a_lo + a_hi + b_lo + b_hi) / 2).astype(int)
        assert hits[mid[0] * 6 + mid[1]]


@pytest.mark.parametrize("seed", range(3))
def test_visibility_edges_sampled(seed):
    """Every same-type visible free pair admits no colliding sample segment."""
    g = generate_city_world(WorldSpec(L=20, H=10, block=10, seed=seed))
    d = decompose(g)
    rng = np.random.default_rng(seed)
    for i, j in visibility_edges(g, d):
        if d.occ[i - 1]:
            continue
        A, B = d.box_meters(i), d.box_meters(j)
        for p, q in zip(rng.uniform(*A, (30, 3)), rng.uniform(*B, (30, 3))):
            assert segment_collisions(g, p, q, step=0.05) == 0
