"""Post-hoc checker for decompositions, independent of the construction code.

Visibility here uses a sweep formulation rather than separating axes: the
hull of boxes A and B is the union over ``lam`` in [0, 1] of the boxes
``lam * A + (1 - lam) * B``, so a voxel overlaps the hull iff the per-axis
linear inequalities in ``lam`` have a common solution.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .decomp import Decomposition
from .grid import OccupancyGrid

PROPERTIES = ("exact_cover", "P1", "P2", "P3", "P4", "topology")


@dataclass
class PropertyResult:
    passed: bool
    checked: int = 0
    counterexample: Optional[str] = None


@dataclass
class VerificationReport:
    results: Dict[str, PropertyResult] = field(default_factory=dict)
    free_components: int = 0
    visibility_components: int = 0

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results.values())

    def __getitem__(self, name: str) -> PropertyResult:
        return self.results[name]

    def lines(self) -> List[str]:
        out = []
        for name in PROPERTIES:
            r = self.results[name]
            tail = f"  first counterexample: {r.counterexample}" if r.counterexample else ""
            out.append(f"{name:12s} {'PASS' if r.passed else 'FAIL'} ({r.checked} checked){tail}")
        return out

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "free_components": self.free_components,
            "visibility_components": self.visibility_components,
            "properties": {k: {"passed": v.passed, "checked": v.checked,
                               "counterexample": v.counterexample}
                           for k, v in self.results.items()},
        }


def face_adjacent_pairs(lo: np.ndarray, hi: np.ndarray, chunk: int = 512) -> np.ndarray:
    """All pairs ``(i, j)``, ``i < j`` (0-based rows) touching with positive face area."""
    n = len(lo)
    out = []
    for s in range(0, n, chunk):
        a_lo = lo[s:s + chunk, None, :]
        a_hi = hi[s:s + chunk, None, :]
        ov = (np.maximum(a_lo, lo[None]) <= np.minimum(a_hi, hi[None]))  # per-axis overlap
        touch = (a_hi + 1 == lo[None]) | (hi[None] + 1 == a_lo)
        adj = np.zeros(ov.shape[:2], dtype=bool)
        for ax in range(3):
            o1, o2 = [o for o in range(3) if o != ax]
            adj |= touch[..., ax] & ov[..., o1] & ov[..., o2]
        ii, jj = np.nonzero(adj)
        ii = ii + s
        keep = ii < jj
        out.append(np.stack([ii[keep], jj[keep]], axis=1))
    if not out:
        return np.zeros((0, 2), dtype=np.int64)
    return np.concatenate(out).astype(np.int64)


def overlapping_pairs(lo: np.ndarray, hi: np.ndarray, chunk: int = 512) -> np.ndarray:
    n = len(lo)
    out = []
    for s in range(0, n, chunk):
        ov = (np.maximum(lo[s:s + chunk, None, :], lo[None]) <=
              np.minimum(hi[s:s + chunk, None, :], hi[None])).all(axis=2)
        ii, jj = np.nonzero(ov)
        ii = ii + s
        keep = ii < jj
        out.append(np.stack([ii[keep], jj[keep]], axis=1))
    return np.concatenate(out) if out else np.zeros((0, 2), dtype=np.int64)


def hull_sweep_hits(a_lo, a_hi, b_lo, b_hi, voxels: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Per voxel (0-based corner rows), whether it overlaps hull(A u B) with positive volume.

    Boxes are continuous ``[lo, hi]`` in voxel units.
    """
    v = np.asarray(voxels, dtype=float)
    L = np.zeros(len(v))
    U = np.ones(len(v))
    ok = np.ones(len(v), dtype=bool)
    a_lo, a_hi, b_lo, b_hi = (np.asarray(x, dtype=float) for x in (a_lo, a_hi, b_lo, b_hi))
    for k in range(3):
        # lower face of the swept box below the voxel's top, upper face above its bottom
        for c, s, r in ((b_lo[k], a_lo[k] - b_lo[k], v[:, k] + 1.0 - tol),
                        (-b_hi[k], -(a_hi[k] - b_hi[k]), -v[:, k] - tol)):
            if s > 0:
                U = np.minimum(U, (r - c) / s)
            elif s < 0:
                L = np.maximum(L, (r - c) / s)
            else:
                ok &= c < r
    return ok & (L < U)


def opposite_surface(occupancy: np.ndarray, typ: int) -> np.ndarray:
    """Voxels of type ``1 - typ`` with a face neighbour of type ``typ``."""
    occ = occupancy.astype(bool)
    same = occ if typ else ~occ
    padded = np.pad(same, 1, constant_values=False)
    touch = np.zeros_like(same)
    for ax in range(3):
        for shift in (-1, 1):
            touch |= np.roll(padded, shift, axis=ax)[1:-1, 1:-1, 1:-1]
    return touch & ~same


def pair_visible(occupancy, surf_by_type, lo, hi, i, j, typ) -> bool:
    """Mutual complete visibility of same-type cells ``i`` and ``j`` (0-based rows)."""
    a0, a1 = lo[i] - 1, hi[i]
    b0, b1 = lo[j] - 1, hi[j]
    bb0 = np.minimum(a0, b0)
    bb1 = np.maximum(a1, b1)
    sub = surf_by_type[typ][bb0[0]:bb1[0], bb0[1]:bb1[1], bb0[2]:bb1[2]]
    vox = np.argwhere(sub)
    if len(vox) == 0:
        return True
    vox = vox + bb0
    return not hull_sweep_hits(a0, a1, b0, b1, vox).any()


def visibility_edges(grid: OccupancyGrid, dec: Decomposition,
                     pairs: Optional[np.ndarray] = None) -> List[Tuple[int, int]]:
    """Same-type adjacent cell pairs in mutual complete visibility (1-based ids)."""
    if pairs is None:
        pairs = face_adjacent_pairs(dec.lo, dec.hi)
    surf = (opposite_surface(grid.occupancy, 0), opposite_surface(grid.occupancy, 1))
    edges = []
    for i, j in pairs:
        if dec.occ[i] != dec.occ[j]:
            continue
        if pair_visible(grid.occupancy, surf, dec.lo, dec.hi, i, j, int(dec.occ[i])):
            edges.append((int(i) + 1, int(j) + 1))
    return edges


def verify_decomposition(grid: OccupancyGrid, dec: Decomposition) -> VerificationReport:
    rep = VerificationReport()
    occ = grid.occupancy
    n = dec.cell_count
    lo, hi = dec.lo, dec.hi

    # exact cover
    in_grid = (lo >= 1).all() and (hi <= np.array(grid.dims)).all() and (lo <= hi).all()
    vol = int(dec.volumes.sum())
    cover = np.zeros(grid.dims, dtype=np.int32)
    for m in range(n):
        cover[lo[m, 0] - 1:hi[m, 0], lo[m, 1] - 1:hi[m, 1], lo[m, 2] - 1:hi[m, 2]] += 1
    ok = bool(in_grid and vol == grid.n_voxels and (cover == 1).all())
    ce = None
    if not ok:
        if not in_grid:
            ce = "cell outside grid bounds"
        else:
            bad = np.argwhere(cover != 1)
            ce = (f"total volume {vol} vs {grid.n_voxels} voxels"
                  + (f"; voxel {tuple(int(v) + 1 for v in bad[0])} covered {int(cover[tuple(bad[0])])}x"
                     if len(bad) else ""))
    rep.results["exact_cover"] = PropertyResult(ok, n, ce)

    # P1
    clash = overlapping_pairs(lo, hi)
    rep.results["P1"] = PropertyResult(
        len(clash) == 0, n * (n - 1) // 2,
        None if len(clash) == 0 else f"cells {clash[0][0] + 1} and {clash[0][1] + 1} overlap")

    # P2
    ce = None
    for m in range(n):
        block = occ[lo[m, 0] - 1:hi[m, 0], lo[m, 1] - 1:hi[m, 1], lo[m, 2] - 1:hi[m, 2]]
        if not (block == bool(dec.occ[m])).all():
            ce = f"cell {m + 1} is not uniformly {'occupied' if dec.occ[m] else 'free'}"
            break
    rep.results["P2"] = PropertyResult(ce is None, n, ce)

    # P4
    ce = None
    dims = grid.dims
    for m in range(n):
        for k in range(6):
            ax, pos = k % 3, k >= 3
            sl = [slice(lo[m, a] - 1, hi[m, a]) for a in range(3)]
            if pos:
                if hi[m, ax] == dims[ax]:
                    continue
                sl[ax] = slice(hi[m, ax], hi[m, ax] + 1)
            else:
                if lo[m, ax] == 1:
                    continue
                sl[ax] = slice(lo[m, ax] - 2, lo[m, ax] - 1)
            face = occ[tuple(sl)]
            if face.any() and not face.all():
                ce = f"cell {m + 1} face {'-+'[pos]}{'xyz'[ax]} is not uniform"
                break
        if ce:
            break
    rep.results["P4"] = PropertyResult(ce is None, n, ce)

    # P3 and topology
    pairs = face_adjacent_pairs(lo, hi)
    edges = visibility_edges(grid, dec, pairs)
    has_same = np.zeros(n, dtype=bool)
    for i, j in pairs:
        if dec.occ[i] == dec.occ[j]:
            has_same[i] = has_same[j] = True
    seen = np.zeros(n, dtype=bool)
    for i, j in edges:
        seen[i - 1] = seen[j - 1] = True
    bad = np.flatnonzero(has_same & ~seen)
    rep.results["P3"] = PropertyResult(
        len(bad) == 0, n,
        None if len(bad) == 0 else f"cell {bad[0] + 1} sees none of its same-type neighbours")

    free = np.flatnonzero(~dec.occ)
    index = -np.ones(n, dtype=np.int64)
    index[free] = np.arange(len(free))
    fe = np.array([(index[i - 1], index[j - 1]) for i, j in edges
                   if not dec.occ[i - 1]], dtype=np.int64).reshape(-1, 2)
    adj = coo_matrix((np.ones(len(fe)), (fe[:, 0], fe[:, 1])), shape=(len(free), len(free)))
    n_vis = connected_components(adj, directed=False)[0] if len(free) else 0
    _, n_vox = ndimage.label(~occ, structure=ndimage.generate_binary_structure(3, 1))
    rep.free_components = int(n_vox)
    rep.visibility_components = int(n_vis)
    rep.results["topology"] = PropertyResult(
        n_vis == n_vox, len(free),
        None if n_vis == n_vox else f"{n_vis} visibility components vs {n_vox} free-voxel components")
    return rep
