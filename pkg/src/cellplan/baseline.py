"""Grid planners on the raw occupancy: Basic Theta* and 26-connected A*."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .errors import QueryError
from .grid import OccupancyGrid

PATH_FORMAT = "cellplan.path/1"


@dataclass
class GridPath:
    points: np.ndarray          # meters
    length: float
    expansions: int = 0
    planner: str = "theta"
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format": PATH_FORMAT,
            "planner": self.planner,
            "waypoints": [[float(x) for x in p] for p in self.points],
            "cells": [],
            "length": float(self.length),
            "trace": [],
            "meta": dict(self.meta, expansions=int(self.expansions)),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def _occ(grid: OccupancyGrid) -> np.ndarray:
    return np.ascontiguousarray(grid.occupancy, dtype=np.uint8)


def line_of_sight(grid: OccupancyGrid, a: Sequence[float], b: Sequence[float],
                  occ: Optional[np.ndarray] = None) -> bool:
    """Segment a->b (meters) touches only free voxels; shared faces count as free
    only when every incident voxel is free."""
    occ = _occ(grid) if occ is None else occ
    r = grid.resolution
    return kernels.line_of_sight(occ, [v / r for v in a], [v / r for v in b])


def endpoint_voxel(grid: OccupancyGrid, p: Sequence[float], name: str = "point") -> Tuple[int, int, int]:
    """0-based free voxel containing ``p``; boundary points may pick any free incident voxel."""
    p = np.asarray(p, dtype=float)
    ext = grid.extent
    if p.shape != (3,) or np.any(p < 0) or np.any(p > ext):
        raise QueryError(f"{name} {p.tolist()} lies outside the grid extent {ext.tolist()}")
    u = p / grid.resolution
    opts = []
    for k in range(3):
        f = min(int(math.floor(u[k])), grid.dims[k] - 1)
        c = [f]
        r = round(u[k])
        if abs(u[k] - r) <= 1e-9:
            c += [i for i in (r - 1, r) if 0 <= i < grid.dims[k] and i != f]
        opts.append(c)
    occ = grid.occupancy
    for i in opts[0]:
        for j in opts[1]:
            for k in opts[2]:
                if not occ[i, j, k]:
                    return (i, j, k)
    raise QueryError(f"{name} {p.tolist()} lies inside an obstacle")


def _grid_plan(grid: OccupancyGrid, start, goal, any_angle: bool) -> Optional[GridPath]:
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    s = endpoint_voxel(grid, start, "start")
    g = endpoint_voxel(grid, goal, "goal")
    r = grid.resolution
    occ = _occ(grid)
    idx, expansions = kernels.grid_search(occ, s, g, start / r, goal / r, any_angle)
    if len(idx) == 0:
        return None
    if len(idx) == 1:
        pts = np.stack([start, goal])
    else:
        pts = (idx.astype(float) + 0.5) * r
        pts[0] = start
        pts[-1] = goal
    length = float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())
    return GridPath(pts, length, expansions, "theta" if any_angle else "astar-grid")


def theta_star(grid: OccupancyGrid, start, goal) -> Optional[GridPath]:
    """Basic Theta* over voxel centres (26 neighbours); None when unreachable."""
    return _grid_plan(grid, start, goal, True)


def grid_astar(grid: OccupancyGrid, start, goal) -> Optional[GridPath]:
    """26-connected A* over voxel centres, the bound Theta* must not exceed."""
    return _grid_plan(grid, start, goal, False)
