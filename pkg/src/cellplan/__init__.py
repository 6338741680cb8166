"""Cell-decomposition path planning on 3D occupancy grids."""

__version__ = "0.1.0"

from .grid import (OccupancyGrid, WorldSpec, free_components, generate_city_world, load_grid,
                   new_grid, save_grid)
from .decomp import Cell, Decomposition, decompose
from .verify import verify_decomposition
from .cellgraph import (ConnectivityGraph, assign_weights, build_graph, compute_margins,
                        optimize_representative_points, prepare_graph, query_overlay)
from .optimize import (Path, PathQuery, astar_socp, check_feasibility, exact_shortest_path,
                       ksp_socp, socp_shortest_path)
from .baseline import line_of_sight, theta_star

__all__ = [
    "OccupancyGrid", "WorldSpec", "free_components", "generate_city_world", "load_grid",
    "new_grid", "save_grid", "Cell", "Decomposition", "decompose", "verify_decomposition",
    "ConnectivityGraph", "assign_weights", "build_graph", "compute_margins",
    "optimize_representative_points", "prepare_graph", "query_overlay", "Path", "PathQuery",
    "astar_socp", "check_feasibility", "exact_shortest_path", "ksp_socp", "socp_shortest_path",
    "line_of_sight", "theta_star",
]
