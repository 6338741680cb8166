"""Convex hull of two axis-aligned boxes and separating-axis data for it.

All coordinates here are in voxel units; a 1-based inclusive cell
``lo..hi`` occupies the continuous box ``[lo - 1, hi]``.
"""
from __future__ import annotations

from typing import Tuple

import numpy as np
from scipy.spatial import ConvexHull

SAT_TOL = 1e-9

_CORNER_BITS = np.array([[(c >> k) & 1 for k in range(3)] for c in range(8)], dtype=float)
_UNIT_AXES = np.eye(3)


def box_corners(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return lo + _CORNER_BITS * (hi - lo)


def _canonical_directions(v: np.ndarray) -> np.ndarray:
    """Normalize, drop near-zero rows, fix sign and deduplicate."""
    norms = np.linalg.norm(v, axis=1)
    v = v[norms > 1e-12] / norms[norms > 1e-12, None]
    # first nonzero component positive
    lead = np.argmax(np.abs(v) > 1e-12, axis=1)
    sign = np.sign(v[np.arange(len(v)), lead])
    v = v * sign[:, None]
    _, keep = np.unique(np.round(v, 10), axis=0, return_index=True)
    return v[np.sort(keep)]


def hull_axes(a_lo, a_hi, b_lo, b_hi) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Candidate separating axes of ``hull(A u B)`` against any axis-aligned box.

    Returns ``(axes, hull_min, hull_max)`` where ``hull_min/max`` are the
    projection extents of the hull on each axis. Candidates are the hull
    facet normals, the three box axes and the cross products of hull edge
    directions with the box axes, which makes the test exact.
    """
    pts = np.vstack([box_corners(a_lo, a_hi), box_corners(b_lo, b_hi)])
    hull = ConvexHull(pts)
    normals = hull.equations[:, :3]
    simp = hull.simplices
    edges = np.concatenate([
        pts[simp[:, 1]] - pts[simp[:, 0]],
        pts[simp[:, 2]] - pts[simp[:, 1]],
        pts[simp[:, 0]] - pts[simp[:, 2]],
    ])
    edges = _canonical_directions(edges)
    crosses = np.cross(edges[:, None, :], _UNIT_AXES[None, :, :]).reshape(-1, 3)
    axes = _canonical_directions(np.vstack([normals, _UNIT_AXES, crosses]))
    # facet normals first: they separate most often
    axes = np.ascontiguousarray(axes)
    proj = pts[hull.vertices] @ axes.T
    return axes, np.ascontiguousarray(proj.min(axis=0)), np.ascontiguousarray(proj.max(axis=0))


def boxes_touch_area(a_lo, a_hi, b_lo, b_hi) -> int:
    """Axis of positive-area face contact between two 1-based inclusive boxes, or -1."""
    for ax in range(3):
        if a_hi[ax] + 1 == b_lo[ax] or b_hi[ax] + 1 == a_lo[ax]:
            others = [o for o in range(3) if o != ax]
            if all(max(a_lo[o], b_lo[o]) <= min(a_hi[o], b_hi[o]) for o in others):
                return ax
            return -1
    return -1
