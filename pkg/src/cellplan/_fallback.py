"""Pure-Python/numpy versions of the hot kernels.

Semantics match ``_kernels.pyx`` exactly; these are used when the compiled
extension is unavailable or ``CELLPLAN_PURE=1`` is set.
"""
from __future__ import annotations

import heapq
import math

import numpy as np

_NEIGHBORS_26 = [(dx, dy, dz)
                 for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)
                 if (dx, dy, dz) != (0, 0, 0)]


def _dist(p, q):
    dx = p[0] - q[0]
    dy = p[1] - q[1]
    dz = p[2] - q[2]
    return math.sqrt(dx * dx + dy * dy + dz * dz)


def _separated(centers, halves, axes, hmin, hmax, tol):
    c = centers @ axes.T
    r = halves @ np.abs(axes).T
    return ((c + r <= hmin + tol) | (c - r >= hmax - tol)).any(axis=1)


def hull_hits_mask(mask, lo, hi, axes, hmin, hmax, tol):
    """True if any voxel set in ``mask[lo:hi]`` overlaps the hull with positive volume."""
    sub = mask[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
    idx = np.argwhere(sub)
    if len(idx) == 0:
        return False
    centers = idx + np.asarray(lo, dtype=float) + 0.5
    halves = np.full_like(centers, 0.5)
    return bool((~_separated(centers, halves, axes, hmin, hmax, tol)).any())


def hull_hits_boxes(blo, bhi, axes, hmin, hmax, tol):
    """True if any box ``[blo_i, bhi_i]`` overlaps the hull with positive volume."""
    if len(blo) == 0:
        return False
    centers = 0.5 * (blo + bhi)
    halves = 0.5 * (bhi - blo)
    return bool((~_separated(centers, halves, axes, hmin, hmax, tol)).any())


def _point_free(occ, p, tol):
    shape = occ.shape
    cands = []
    for k in range(3):
        r = round(p[k])
        if abs(p[k] - r) <= tol:
            opts = [i for i in (r - 1, r) if 0 <= i < shape[k]]
        else:
            f = math.floor(p[k])
            opts = [f] if 0 <= f < shape[k] else []
        if not opts:
            return False
        cands.append(opts)
    for i in cands[0]:
        for j in cands[1]:
            for k in cands[2]:
                if occ[i, j, k]:
                    return False
    return True


def line_of_sight(occ, a, b, tol=1e-9):
    """Exact segment-vs-occupied-voxel test in voxel units.

    A point is free only if every voxel whose closed box contains it is free.
    """
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    d = [b[k] - a[k] for k in range(3)]
    if not _point_free(occ, a, tol):
        return False
    nxt = [math.inf] * 3
    step = [0, 0, 0]
    m = [0, 0, 0]
    for k in range(3):
        if d[k] > tol:
            step[k] = 1
            m[k] = math.floor(a[k] + tol) + 1
        elif d[k] < -tol:
            step[k] = -1
            m[k] = math.ceil(a[k] - tol) - 1
        if step[k]:
            nxt[k] = (m[k] - a[k]) / d[k]
    t_prev = 0.0
    while True:
        t_next = min(min(nxt), 1.0)
        tm = 0.5 * (t_prev + t_next)
        if not _point_free(occ, [a[k] + tm * d[k] for k in range(3)], tol):
            return False
        if t_next >= 1.0:
            return _point_free(occ, b, tol)
        if not _point_free(occ, [a[k] + t_next * d[k] for k in range(3)], tol):
            return False
        for k in range(3):
            if step[k] and nxt[k] <= t_next + 1e-12:
                m[k] += step[k]
                nxt[k] = (m[k] - a[k]) / d[k]
        t_prev = t_next


def grid_search(occ, start_idx, goal_idx, start_pt, goal_pt, any_angle=True):
    """Basic Theta* (``any_angle``) or 26-connected A* over voxel centers.

    Start and goal nodes sit at ``start_pt``/``goal_pt`` instead of their
    voxel centers. Returns ``(path_indices, expansions)``; path is empty
    when the goal is unreachable.
    """
    shape = occ.shape
    start = tuple(int(v) for v in start_idx)
    goal = tuple(int(v) for v in goal_idx)
    gp = tuple(float(v) for v in goal_pt)
    sp = tuple(float(v) for v in start_pt)

    def pos(n):
        if n == start:
            return sp
        if n == goal:
            return gp
        return (n[0] + 0.5, n[1] + 0.5, n[2] + 0.5)

    g = {start: 0.0}
    parent = {start: start}
    closed = set()
    heap = [(_dist(sp, gp), -0.0, start)]
    expansions = 0
    while heap:
        f, neg_g, s = heapq.heappop(heap)
        if s in closed or -neg_g != g[s]:
            continue
        if s == goal:
            path = [s]
            while path[-1] != start:
                path.append(parent[path[-1]])
            return np.array(path[::-1], dtype=np.int64), expansions
        closed.add(s)
        expansions += 1
        ps = pos(s)
        par = parent[s]
        ppar = pos(par)
        for dx, dy, dz in _NEIGHBORS_26:
            n = (s[0] + dx, s[1] + dy, s[2] + dz)
            if not (0 <= n[0] < shape[0] and 0 <= n[1] < shape[1] and 0 <= n[2] < shape[2]):
                continue
            if occ[n] or n in closed:
                continue
            pn = pos(n)
            if any_angle and line_of_sight(occ, ppar, pn):
                cand = g[par] + _dist(ppar, pn)
                via = par
            elif line_of_sight(occ, ps, pn):
                cand = g[s] + _dist(ps, pn)
                via = s
            else:
                continue
            if cand < g.get(n, math.inf):
                g[n] = cand
                parent[n] = via
                heapq.heappush(heap, (cand + _dist(pn, gp), -cand, n))
    return np.zeros((0, 3), dtype=np.int64), expansions
