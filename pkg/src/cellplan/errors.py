"""Exception types shared across the package."""


class CellplanError(Exception):
    pass


class QueryError(CellplanError, ValueError):
    """Start/goal outside the grid, inside an obstacle, or margin-infeasible."""


class MarginError(QueryError):
    def __init__(self, message: str, cells):
        super().__init__(message)
        self.cells = list(cells)


class NumericError(CellplanError, RuntimeError):
    """The conic engine did not reach the requested accuracy."""

    def __init__(self, message: str, residuals: dict):
        super().__init__(f"{message} (residuals: {residuals})")
        self.residuals = residuals


class ResourceError(CellplanError, RuntimeError):
    """A search hit its node cap; carries the best incumbent found."""

    def __init__(self, message: str, incumbent=None, lower_bound: float = float("nan")):
        super().__init__(message)
        self.incumbent = incumbent
        self.lower_bound = lower_bound
