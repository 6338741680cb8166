"""Box-cell decomposition of occupancy grids with per-cell property checks.

Cells are stored like the columns of a ``6 x Nc`` matrix: 1-based inclusive
voxel indices of the lowermost (``lo``) and uppermost (``hi``) corners.
Cell ids are 1-based; a coverage entry of 0 means "not yet assigned".

The four properties enforced on every cell:

* P1 no overlap with previously committed cells,
* P2 uniform occupancy inside the cell,
* P3 mutual complete visibility with at least one adjacent committed cell of
  the same type (vacuous when there is none),
* P4 uniform occupancy of the voxel slab across each face.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .geometry import SAT_TOL, hull_axes
from .grid import OccupancyGrid

MAX_RECURSION_DEPTH = 2
DECOMP_FORMAT = "cellplan.decomposition/1"

# face order: -x, -y, -z, +x, +y, +z
FACES = tuple((k % 3, k >= 3) for k in range(6))


@dataclass(frozen=True)
class Cell:
    lo: Tuple[int, int, int]
    hi: Tuple[int, int, int]

    def __post_init__(self):
        if any(a > b for a, b in zip(self.lo, self.hi)):
            raise ValueError(f"cell lo {self.lo} exceeds hi {self.hi}")
        if min(self.lo) < 1:
            raise ValueError(f"cell lo {self.lo} must be 1-based")

    @property
    def shape(self) -> Tuple[int, int, int]:
        return tuple(h - l + 1 for l, h in zip(self.lo, self.hi))

    @property
    def volume(self) -> int:
        sx, sy, sz = self.shape
        return sx * sy * sz

    @property
    def slices(self) -> Tuple[slice, slice, slice]:
        return tuple(slice(l - 1, h) for l, h in zip(self.lo, self.hi))

    def column(self) -> Tuple[int, ...]:
        return tuple(self.lo) + tuple(self.hi)


class Decomposition:
    """Cell matrix, obstacle flags and the coverage map of one grid."""

    def __init__(self, lo: np.ndarray, hi: np.ndarray, occ: np.ndarray,
                 dims: Sequence[int], resolution: float = 1.0,
                 coverage: Optional[np.ndarray] = None):
        self.lo = np.asarray(lo, dtype=np.int64).reshape(-1, 3)
        self.hi = np.asarray(hi, dtype=np.int64).reshape(-1, 3)
        self.occ = np.asarray(occ, dtype=bool).reshape(-1)
        self.dims = tuple(int(d) for d in dims)
        self.resolution = float(resolution)
        self._coverage = coverage

    @property
    def cell_count(self) -> int:
        return len(self.occ)

    @property
    def cells(self) -> List[Cell]:
        return [self.cell(n) for n in range(1, self.cell_count + 1)]

    def cell(self, n: int) -> Cell:
        return Cell(tuple(int(v) for v in self.lo[n - 1]), tuple(int(v) for v in self.hi[n - 1]))

    @property
    def volumes(self) -> np.ndarray:
        return np.prod(self.hi - self.lo + 1, axis=1)

    @property
    def coverage(self) -> np.ndarray:
        """Voxel -> owning cell id map (rebuilt from the cell list if needed)."""
        if self._coverage is None:
            cov = np.zeros(self.dims, dtype=np.int32)
            for n in range(self.cell_count):
                (a, b, c), (d, e, f) = self.lo[n], self.hi[n]
                cov[a - 1:d, b - 1:e, c - 1:f] = n + 1
            self._coverage = cov
        return self._coverage

    def box_meters(self, n: int) -> Tuple[np.ndarray, np.ndarray]:
        """Continuous extent of cell ``n`` in meters."""
        return ((self.lo[n - 1] - 1).astype(float) * self.resolution,
                self.hi[n - 1].astype(float) * self.resolution)

    def free_ids(self) -> np.ndarray:
        return np.flatnonzero(~self.occ) + 1

    def to_dict(self, include_coverage: bool = False) -> dict:
        doc = {
            "format": DECOMP_FORMAT,
            "dims": list(self.dims),
            "resolution": self.resolution,
            "cells": [
                {"lo": [int(v) for v in self.lo[n]], "hi": [int(v) for v in self.hi[n]],
                 "obstacle": bool(self.occ[n])}
                for n in range(self.cell_count)
            ],
        }
        if include_coverage:
            doc["coverage"] = self.coverage.ravel(order="F").tolist()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "Decomposition":
        if doc.get("format") != DECOMP_FORMAT:
            raise ValueError(f"not a decomposition document: format={doc.get('format')!r}")
        cells = doc["cells"]
        lo = np.array([c["lo"] for c in cells], dtype=np.int64).reshape(-1, 3)
        hi = np.array([c["hi"] for c in cells], dtype=np.int64).reshape(-1, 3)
        occ = np.array([c["obstacle"] for c in cells], dtype=bool)
        dims = doc["dims"]
        cov = None
        if "coverage" in doc:
            cov = np.array(doc["coverage"], dtype=np.int32).reshape(dims, order="F")
        return cls(lo, hi, occ, dims, doc.get("resolution", 1.0), cov)

    def dumps(self, include_coverage: bool = False) -> str:
        return json.dumps(self.to_dict(include_coverage), indent=1, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "Decomposition":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Summed-volume tables


def _prefix(a: np.ndarray) -> np.ndarray:
    dtype = np.int64 if a.size >= 2**31 else np.int32
    p = np.zeros(tuple(s + 1 for s in a.shape), dtype=dtype)
    p[1:, 1:, 1:] = a.astype(dtype).cumsum(0).cumsum(1).cumsum(2)
    return p


def _box_sum(p: np.ndarray, a0, b0) -> int:
    """Sum over the 0-based half-open box ``[a0, b0)``."""
    x0, y0, z0 = a0
    x1, y1, z1 = b0
    return int(p[x1, y1, z1] - p[x0, y1, z1] - p[x1, y0, z1] - p[x1, y1, z0]
               + p[x0, y0, z1] + p[x0, y1, z0] + p[x1, y0, z0] - p[x0, y0, z0])


def boundary_masks(occupancy: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Voxels of the opposite type that touch a voxel of type 0 / type 1 by a face.

    ``masks[t]`` marks voxels with occupancy ``!= t`` having a 6-neighbour with
    occupancy ``t``. A hull of two type-``t`` cells overlaps opposite-type
    voxels iff it overlaps one of these.
    """
    occ = occupancy.astype(bool)
    near_free = np.zeros_like(occ)
    near_occ = np.zeros_like(occ)
    for ax in range(3):
        for sl_dst, sl_src in ((slice(1, None), slice(None, -1)), (slice(None, -1), slice(1, None))):
            dst = [slice(None)] * 3
            src = [slice(None)] * 3
            dst[ax] = sl_dst
            src[ax] = sl_src
            near_free[tuple(dst)] |= ~occ[tuple(src)]
            near_occ[tuple(dst)] |= occ[tuple(src)]
    return (occ & near_free).astype(np.uint8), (~occ & near_occ).astype(np.uint8)


class _Workspace:
    """Occupancy-derived lookup tables shared by the property checks."""

    def __init__(self, occupancy: np.ndarray, with_masks: bool = True):
        self.D = np.ascontiguousarray(occupancy, dtype=bool)
        self.dims = self.D.shape
        self.psum = _prefix(self.D)
        self._masks = None
        self._mask_psum = None
        if with_masks:
            self._build_masks()
        self._hull_cache: Dict[tuple, bool] = {}

    def _build_masks(self):
        m0, m1 = boundary_masks(self.D)
        self._masks = (np.ascontiguousarray(m0), np.ascontiguousarray(m1))
        self._mask_psum = (_prefix(m0), _prefix(m1))

    def occ_sum(self, lo, hi) -> int:
        """Obstacle count inside 1-based inclusive box."""
        return _box_sum(self.psum, [v - 1 for v in lo], hi)

    def hull_clear(self, a_lo, a_hi, b_lo, b_hi, typ: int) -> bool:
        """True if hull of the two type-``typ`` cells has no opposite-type voxel."""
        key = (tuple(a_lo), tuple(a_hi), tuple(b_lo), tuple(b_hi), typ)
        hit = self._hull_cache.get(key)
        if hit is not None:
            return hit
        if self._masks is None:
            self._build_masks()
        bb0 = [min(a, b) - 1 for a, b in zip(a_lo, b_lo)]
        bb1 = [max(a, b) for a, b in zip(a_hi, b_hi)]
        if _box_sum(self._mask_psum[typ], bb0, bb1) == 0:
            clear = True
        else:
            axes, hmin, hmax = hull_axes(np.subtract(a_lo, 1), a_hi, np.subtract(b_lo, 1), b_hi)
            clear = not kernels.hull_hits_mask(self._masks[typ], bb0, bb1, axes, hmin, hmax, SAT_TOL)
        self._hull_cache[key] = clear
        return clear


def _face_slab(lo, hi, k, dims) -> Optional[Tuple[List[int], List[int]]]:
    """1-based inclusive slab of voxels across face ``k``; None on grid limits."""
    ax, pos = FACES[k]
    flo, fhi = list(lo), list(hi)
    if pos:
        if hi[ax] >= dims[ax]:
            return None
        flo[ax] = fhi[ax] = hi[ax] + 1
    else:
        if lo[ax] <= 1:
            return None
        flo[ax] = fhi[ax] = lo[ax] - 1
    return flo, fhi


def _slices(lo, hi):
    return tuple(slice(a - 1, b) for a, b in zip(lo, hi))


# ---------------------------------------------------------------------------
# Property checks


def check_p1(cell: Cell, coverage: np.ndarray) -> int:
    """1 if no voxel of ``cell`` is already owned by a committed cell."""
    return int(not coverage[cell.slices].any())


def check_p2(cell: Cell, grid: OccupancyGrid) -> int:
    """1 if all voxels of ``cell`` share one occupancy value."""
    total = int(grid.occupancy[cell.slices].sum())
    return int(total == 0 or total == cell.volume)


def check_p4(cell: Cell, grid: OccupancyGrid) -> Tuple[int, Tuple[int, ...]]:
    """Face uniformity flags ``u`` ordered (-x, -y, -z, +x, +y, +z) and their AND."""
    u = []
    for k in range(6):
        slab = _face_slab(cell.lo, cell.hi, k, grid.dims)
        if slab is None:
            u.append(1)
            continue
        vals = grid.occupancy[_slices(*slab)]
        s = int(vals.sum())
        u.append(int(s == 0 or s == vals.size))
    return int(all(u)), tuple(u)


def _adjacent_ids(lo, hi, coverage: np.ndarray, exclude: int = 0) -> List[int]:
    ids = set()
    for k in range(6):
        slab = _face_slab(lo, hi, k, coverage.shape)
        if slab is None:
            continue
        ids.update(np.unique(coverage[_slices(*slab)]).tolist())
    ids.discard(0)
    ids.discard(exclude)
    return sorted(ids)


def _p3(ws: _Workspace, lo, hi, typ, coverage, cell_lo, cell_hi, cell_occ, exclude=0) -> int:
    same = [m for m in _adjacent_ids(lo, hi, coverage, exclude) if cell_occ[m - 1] == typ]
    if not same:
        return 1
    for m in same:
        if ws.hull_clear(lo, hi, cell_lo[m - 1], cell_hi[m - 1], typ):
            return 1
    return 0


def check_p3(cells: Sequence[Cell], coverage: np.ndarray, grid: OccupancyGrid, n: int) -> int:
    """Mutual complete visibility of cell ``n`` with some adjacent committed cell.

    ``cells`` lists all cells by id (1-based); committed cells are those
    present in ``coverage``. Returns 1 when no committed same-type cell is
    adjacent.
    """
    cell = cells[n - 1]
    typ = int(grid.occupancy[tuple(v - 1 for v in cell.lo)])
    cell_lo = [c.lo for c in cells]
    cell_hi = [c.hi for c in cells]
    cell_occ = [int(grid.occupancy[tuple(v - 1 for v in c.lo)]) for c in cells]
    ws = _Workspace(grid.occupancy)
    return _p3(ws, cell.lo, cell.hi, typ, coverage, cell_lo, cell_hi, cell_occ, exclude=n)


# ---------------------------------------------------------------------------
# Decomposition


class _Decomposer:
    def __init__(self, occupancy: np.ndarray, max_cells: int, depth: int = 0):
        if depth > MAX_RECURSION_DEPTH:
            raise AssertionError(f"recursion depth {depth} exceeds {MAX_RECURSION_DEPTH}")
        self.depth = depth
        self.max_cells = max_cells
        # P3 masks are only needed when a cell can have committed neighbours
        self.ws = _Workspace(occupancy, with_masks=max_cells > 1)
        self.dims = self.ws.dims
        self.B = np.zeros(self.dims, dtype=np.int32, order="F")
        self.cell_lo: List[Tuple[int, int, int]] = []
        self.cell_hi: List[Tuple[int, int, int]] = []
        self.cell_occ: List[int] = []
        self._scan = 0
        self.max_depth_seen = depth

    def _first_uncovered(self) -> Optional[Tuple[int, int, int]]:
        flat = self.B.ravel(order="F")
        rest = np.flatnonzero(flat[self._scan:] == 0)
        if len(rest) == 0:
            return None
        self._scan += int(rest[0])
        i = np.unravel_index(self._scan, self.dims, order="F")
        return tuple(int(v) + 1 for v in i)

    def _is_corner(self, v) -> bool:
        """Seed voxel whose -x, -y, -z neighbours are covered or off-grid."""
        for a in range(3):
            if v[a] > 1:
                w = [x - 1 for x in v]
                w[a] -= 1
                if self.B[tuple(w)] == 0:
                    return False
        return True

    def _next_seed(self, lo, hi) -> Optional[Tuple[int, int, int]]:
        # cells only grow toward +x/+y/+z, so a seed must be a lower corner of
        # the uncovered region or it degenerates into a 1-voxel slice
        for k in range(6):
            slab = _face_slab(lo, hi, k, self.dims)
            if slab is None:
                continue
            sub = self.B[_slices(*slab)]
            for f in np.flatnonzero(sub.ravel(order="F") == 0):
                off = np.unravel_index(int(f), sub.shape, order="F")
                v = tuple(int(a) + int(o) for a, o in zip(slab[0], off))
                if self._is_corner(v):
                    return v
        return self._first_uncovered()

    def _slab_ok(self, lo, hi, d, step, typ) -> bool:
        slo, shi = list(lo), list(hi)
        slo[d] = hi[d] + 1
        shi[d] = hi[d] + step
        if self.B[_slices(slo, shi)].any():
            return False  # P1
        s = self.ws.occ_sum(slo, shi)
        vol = int(np.prod(np.subtract(shi, slo) + 1))
        return s == (vol if typ else 0)  # P2

    def _face_uniform(self, lo, hi) -> List[int]:
        u = []
        for k in range(6):
            slab = _face_slab(lo, hi, k, self.dims)
            if slab is None:
                u.append(1)
                continue
            s = self.ws.occ_sum(*slab)
            vol = int(np.prod(np.subtract(slab[1], slab[0]) + 1))
            u.append(int(s == 0 or s == vol))
        return u

    def _grow(self, seed) -> Tuple[List[int], List[int], int]:
        lo = list(seed)
        hi = list(seed)
        typ = int(self.ws.D[tuple(v - 1 for v in seed)])
        e = [1, 1, 1]
        step = [1, 1, 1]
        q = [1, 1, 1]
        while True:
            for d in range(3):
                if not e[d]:
                    continue
                if hi[d] >= self.dims[d]:
                    hi[d] = self.dims[d]
                    e[d] = 0
                    continue
                s = min(step[d], self.dims[d] - hi[d])
                ok = self._slab_ok(lo, hi, d, s, typ)
                if ok and self.max_cells > 1:
                    cand = list(hi)
                    cand[d] += s
                    ok = bool(_p3(self.ws, lo, cand, typ, self.B,
                                  self.cell_lo, self.cell_hi, self.cell_occ))
                if ok:
                    hi[d] += s
                    if q[d]:
                        step[d] = s * 2
                    if hi[d] >= self.dims[d]:
                        e[d] = 0
                else:
                    q[d] = 0
                    if s == 1:
                        e[d] = 0
                    else:
                        step[d] = s // 2
            u = self._face_uniform(lo, hi)
            if not all(u):
                for k in range(6):
                    if u[k]:
                        continue
                    self._repair_face(lo, hi, e, k)
                    u = self._face_uniform(lo, hi)
            if not any(e):
                return lo, hi, typ

    def _repair_face(self, lo, hi, e, k) -> None:
        """Shrink the cell so face ``k`` sees a single uniform cell of its slab."""
        flo, fhi = _face_slab(lo, hi, k, self.dims)
        J = self.ws.D[_slices(flo, fhi)]
        sub = _Decomposer(J, 1, self.depth + 1)
        t_lo, t_hi = sub.run_first()
        self.max_depth_seen = max(self.max_depth_seen, sub.max_depth_seen)
        for b in range(3):
            if t_hi[b] < J.shape[b]:
                hi[b] = lo[b] + t_hi[b] - 1
                e[b] = 0

    def run_first(self):
        lo, hi, _ = self._grow((1, 1, 1))
        return lo, hi

    def run(self):
        seed = (1, 1, 1)
        while seed is not None:
            lo, hi, typ = self._grow(seed)
            n = len(self.cell_lo) + 1
            self.B[_slices(lo, hi)] = n
            self.cell_lo.append(tuple(lo))
            self.cell_hi.append(tuple(hi))
            self.cell_occ.append(typ)
            if n >= self.max_cells:
                break
            seed = self._next_seed(lo, hi)
        return self


def decompose(grid: OccupancyGrid, M: Optional[int] = None) -> Decomposition:
    """Decompose ``grid`` into cells satisfying P1-P4.

    ``M`` caps the number of cells (recursive calls use 1); the default is
    the voxel count, which can never be reached.
    """
    max_cells = grid.n_voxels if M is None else int(M)
    if max_cells < 1:
        raise ValueError("M must be >= 1")
    dec = _Decomposer(grid.occupancy, max_cells).run()
    assert dec.max_depth_seen <= MAX_RECURSION_DEPTH
    return Decomposition(np.array(dec.cell_lo), np.array(dec.cell_hi),
                         np.array(dec.cell_occ, dtype=bool), grid.dims, grid.resolution,
                         coverage=dec.B if len(dec.cell_lo) and not (dec.B == 0).any() else None)
