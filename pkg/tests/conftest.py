import math

import numpy as np
import pytest
from scipy.optimize import minimize

from cellplan.decomp import Decomposition
from cellplan.grid import OccupancyGrid


# ---------------------------------------------------------------------------
# worlds


def box_world(seed, dims=(20, 20, 10), n_boxes=(1, 4)):
    """A few axis-aligned blocks standing on the floor."""
    rng = np.random.default_rng(seed)
    occ = np.zeros(dims, dtype=bool)
    for _ in range(int(rng.integers(*n_boxes))):
        lo = rng.integers(2, dims[0] - 6, 2)
        sz = rng.integers(2, 7, 2)
        h = int(rng.integers(dims[2] // 2 - 1, dims[2] + 1))
        occ[lo[0]:lo[0] + sz[0], lo[1]:lo[1] + sz[1], :h] = True
    return OccupancyGrid(occ, 1.0)


def noise_grid(seed, dims=(6, 6, 4), p=0.3):
    rng = np.random.default_rng(seed)
    return OccupancyGrid(rng.random(dims) < p, 1.0)


# ---------------------------------------------------------------------------
# collision oracle


def segment_collisions(grid, a, b, step=None):
    """Sample a->b densely; count samples strictly inside the obstacle union.

    A sample on a voxel boundary collides only if every voxel incident to it is
    occupied, so grazing an obstacle face or edge is not a collision.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    r = grid.resolution
    step = r / 64 if step is None else step
    n = max(2, int(math.ceil(np.linalg.norm(b - a) / step)) + 1)
    t = np.linspace(0.0, 1.0, n)[:, None]
    u = (a + t * (b - a)) / r
    occ = grid.occupancy
    dims = np.array(grid.dims)
    if np.any(u < -1e-9) or np.any(u > dims + 1e-9):
        return n  # leaving the world counts as a collision
    near = np.abs(u - np.round(u)) <= 1e-9
    lo = np.where(near, np.round(u) - 1, np.floor(u)).astype(int)
    hi = np.where(near, np.round(u), np.floor(u)).astype(int)
    inside = np.ones(n, dtype=bool)
    for cx in (lo[:, 0], hi[:, 0]):
        for cy in (lo[:, 1], hi[:, 1]):
            for cz in (lo[:, 2], hi[:, 2]):
                ok = (cx >= 0) & (cx < dims[0]) & (cy >= 0) & (cy < dims[1]) & (cz >= 0) & (cz < dims[2])
                hit = np.zeros(n, dtype=bool)
                hit[ok] = occ[cx[ok], cy[ok], cz[ok]]
                inside &= hit
    return int(inside.sum())


def polyline_collisions(grid, W):
    W = np.asarray(W, dtype=float)
    return sum(segment_collisions(grid, W[i], W[i + 1]) for i in range(len(W) - 1))


# ---------------------------------------------------------------------------
# fixed-sequence oracles


def random_corridor(rng, max_cells=5, res=0.05, size=(3, 9)):
    """Chain of face-adjacent boxes in lattice units; returns a Decomposition."""
    n = int(rng.integers(2, max_cells + 1))
    lo = [np.array([40, 40, 40])]
    hi = [lo[0] + rng.integers(*size, 3)]
    for _ in range(n - 1):
        ax = int(rng.integers(3))
        sgn = 1 if rng.random() < 0.5 else -1
        ext = rng.integers(*size, 3)
        plo, phi = lo[-1], hi[-1]
        nlo = np.empty(3, dtype=int)
        for k in range(3):
            if k == ax:
                continue
            # overlap of at least one lattice step with the previous box
            nlo[k] = int(rng.integers(plo[k] - ext[k] + 1, phi[k]))
        nlo[ax] = phi[ax] if sgn > 0 else plo[ax] - ext[ax]
        lo.append(nlo)
        hi.append(nlo + ext)
    lo = np.array(lo)
    hi = np.array(hi)
    # Decomposition boxes are 1-based inclusive voxel ranges
    shift = lo.min(axis=0)
    lo1 = lo - shift + 1
    hi1 = hi - shift
    dims = tuple(int(v) for v in hi1.max(axis=0))
    dec = Decomposition(lo1, hi1, np.zeros(n, dtype=bool), dims, res)
    return dec


def boxes_of(dec, margins, cells):
    from cellplan.cellgraph import shrunk_box
    return [shrunk_box(dec, margins, c) for c in cells]


def lattice_dp(boxes, w_in, w_t, h):
    """Shortest path with interior waypoints restricted to an h-spaced lattice."""
    def pts(lo, hi):
        axes = [np.arange(np.ceil(lo[k] / h - 1e-9), np.floor(hi[k] / h + 1e-9) + 1) * h for k in range(3)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 3)

    inner = [pts(lo, hi) for lo, hi in boxes[1:-1]]
    if not inner:
        return float(np.linalg.norm(w_t - w_in))
    cost = np.linalg.norm(inner[0] - w_in, axis=1)
    for prev, cur in zip(inner, inner[1:]):
        d = np.linalg.norm(cur[:, None, :] - prev[None, :, :], axis=2)
        cost = (d + cost[None, :]).min(axis=1)
    return float((cost + np.linalg.norm(inner[-1] - w_t, axis=1)).min())


def smoothed_descent(boxes, w_in, w_t):
    """Box-constrained descent on sum sqrt(|d|^2 + delta^2) with delta -> 0.

    Uses scipy's L-BFGS-B, which shares no code with the conic engine.
    Returns the exact (unsmoothed) length of the final iterate.
    """
    inner = boxes[1:-1]
    if not inner:
        return float(np.linalg.norm(w_t - w_in))
    lb = np.concatenate([lo for lo, _ in inner])
    ub = np.concatenate([hi for _, hi in inner])

    def full(x):
        return np.vstack([w_in, x.reshape(-1, 3), w_t])

    def length(x):
        return float(np.linalg.norm(np.diff(full(x), axis=0), axis=1).sum())

    x = 0.5 * (lb + ub)
    for delta in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7):
        def f(x, delta=delta):
            d = np.diff(full(x), axis=0)
            s = np.sqrt((d * d).sum(axis=1) + delta * delta)
            g = d / s[:, None]
            grad = g[:-1] - g[1:]
            return float(s.sum()), grad.ravel()

        x = minimize(f, x, jac=True, method="L-BFGS-B", bounds=list(zip(lb, ub)),
                     options={"maxiter": 5000, "ftol": 1e-15, "gtol": 1e-12}).x
    return length(x)


@pytest.fixture
def corridor_world():
    """Two detours around a blocked centre square; a small block sits in the lower one."""
    occ = np.zeros((20, 20, 5), dtype=bool)
    occ[5:15, 5:15, :] = True
    occ[8:9, 0:2, :] = True
    return OccupancyGrid(occ, 1.0)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
