"""Sum-of-norms programs and the conic engine that solves them.

Every optimization in the package has the shape

    minimize   sum_e || G_e z + h_e ||_2
    subject to lb <= z <= ub

which is solved through its epigraph form (one second-order cone per term).
Engines are interchangeable; :class:`ClarabelEngine` is the default.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import NumericError

GAP_TOL = 1e-6
MAX_ITER = 200


class SumOfNorms:
    """Builder for a sum-of-norms program over ``n`` variables."""

    def __init__(self, n: int, lb: Optional[np.ndarray] = None, ub: Optional[np.ndarray] = None):
        self.n = int(n)
        self.lb = np.full(self.n, -np.inf) if lb is None else np.asarray(lb, dtype=float).copy()
        self.ub = np.full(self.n, np.inf) if ub is None else np.asarray(ub, dtype=float).copy()
        self._rows: List[int] = []
        self._cols: List[int] = []
        self._vals: List[float] = []
        self._h: List[float] = []
        self.sizes: List[int] = []

    @property
    def n_terms(self) -> int:
        return len(self.sizes)

    def add_difference(self, plus: Optional[Sequence[int]], minus: Optional[Sequence[int]],
                       const: Sequence[float]) -> None:
        """Add ``|| z[plus] - z[minus] + const ||``; either index list may be None."""
        const = np.asarray(const, dtype=float)
        base = len(self._h)
        for k in range(len(const)):
            if plus is not None:
                self._rows.append(base + k)
                self._cols.append(int(plus[k]))
                self._vals.append(1.0)
            if minus is not None:
                self._rows.append(base + k)
                self._cols.append(int(minus[k]))
                self._vals.append(-1.0)
        self._h.extend(const.tolist())
        self.sizes.append(len(const))

    def matrix(self):
        G = sp.csr_matrix((self._vals, (self._rows, self._cols)), shape=(len(self._h), self.n))
        return G, np.asarray(self._h)

    def evaluate(self, z: np.ndarray) -> float:
        return float(self.term_values(z).sum())

    def term_values(self, z: np.ndarray) -> np.ndarray:
        G, h = self.matrix()
        r = G @ np.asarray(z, dtype=float) + h
        cone_of = np.repeat(np.arange(self.n_terms), self.sizes)
        return np.sqrt(np.bincount(cone_of, weights=r * r, minlength=self.n_terms))


@dataclass
class ConicSolution:
    z: np.ndarray
    value: float
    dual_value: float
    gap: float
    iterations: int
    status: str
    solve_time: float


def relative_gap(primal: float, dual: float) -> float:
    # objectives are lengths in meters; below 1 m the gap is taken as absolute
    return abs(primal - dual) / max(1.0, abs(primal))


class ConicEngine:
    """Interface: solve a :class:`SumOfNorms` to the package accuracy contract."""

    gap_tol = GAP_TOL
    max_iter = MAX_ITER

    def solve(self, prob: SumOfNorms) -> ConicSolution:  # pragma: no cover - interface
        raise NotImplementedError


class ClarabelEngine(ConicEngine):
    def __init__(self, gap_tol: float = GAP_TOL, max_iter: int = MAX_ITER):
        self.gap_tol = gap_tol
        self.max_iter = max_iter

    def solve(self, prob: SumOfNorms) -> ConicSolution:
        import clarabel

        if np.any(prob.lb > prob.ub):
            bad = np.flatnonzero(prob.lb > prob.ub)
            raise NumericError("empty box constraint", {"variables": bad.tolist()})
        n, m = prob.n, prob.n_terms
        if m == 0:
            z = np.clip(np.zeros(n), prob.lb, prob.ub)
            z = np.where(np.isfinite(z), z, 0.0)
            return ConicSolution(z, 0.0, 0.0, 0.0, 0, "Solved", 0.0)

        nx = n + m  # decision vector [z, t]
        lo_idx = np.flatnonzero(np.isfinite(prob.lb))
        hi_idx = np.flatnonzero(np.isfinite(prob.ub))
        n_box = len(lo_idx) + len(hi_idx)
        sizes = np.asarray(prob.sizes)
        g_rows = np.asarray(prob._rows, dtype=np.int64)
        cone_of = np.repeat(np.arange(m), sizes)
        t_rows = n_box + np.concatenate([[0], np.cumsum(sizes + 1)[:-1]])

        # box rows: s = ub - z >= 0 and s = z - lb >= 0
        # cone e:   s = (t_e, G_e z + h_e) = b - A x
        rows = np.concatenate([np.arange(n_box), t_rows,
                               g_rows + n_box + cone_of[g_rows] + 1])
        cols = np.concatenate([hi_idx, lo_idx, n + np.arange(m), np.asarray(prob._cols, dtype=np.int64)])
        vals = np.concatenate([np.ones(len(hi_idx)), -np.ones(len(lo_idx)), -np.ones(m),
                               -np.asarray(prob._vals, dtype=float)])
        n_rows = n_box + int(sizes.sum()) + m
        A = sp.csc_matrix((vals, (rows, cols)), shape=(n_rows, nx))
        b = np.zeros(n_rows)
        b[:len(hi_idx)] = prob.ub[hi_idx]
        b[len(hi_idx):n_box] = -prob.lb[lo_idx]
        h = np.asarray(prob._h)
        b[np.arange(len(h)) + n_box + cone_of + 1] = h
        cones = []
        if n_box:
            cones.append(clarabel.NonnegativeConeT(n_box))
        cones += [clarabel.SecondOrderConeT(int(k) + 1) for k in sizes]
        q = np.concatenate([np.zeros(n), np.ones(m)])
        P = sp.csc_matrix((nx, nx))

        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.max_iter = self.max_iter
        settings.tol_gap_rel = min(1e-8, self.gap_tol * 1e-2)
        settings.tol_gap_abs = min(1e-8, self.gap_tol * 1e-2)
        settings.tol_feas = 1e-9
        res = clarabel.DefaultSolver(P, q, A, b, cones, settings).solve()
        status = str(res.status)
        x = np.asarray(res.x, dtype=float)
        residuals = {"status": status, "iterations": int(res.iterations),
                     "r_prim": float(res.r_prim), "r_dual": float(res.r_dual)}
        if status not in ("Solved", "AlmostSolved") or not np.all(np.isfinite(x)):
            raise NumericError("conic solve failed", residuals)
        z = np.clip(x[:n], prob.lb, prob.ub)
        value = prob.evaluate(z)
        dual = float(res.obj_val_dual)
        gap = relative_gap(value, dual)
        residuals["gap"] = gap
        if gap > self.gap_tol:
            raise NumericError("duality gap above tolerance", residuals)
        return ConicSolution(z, value, dual, gap, int(res.iterations), status, float(res.solve_time))


_default_engine: ConicEngine = ClarabelEngine()


def default_engine() -> ConicEngine:
    return _default_engine


def set_default_engine(engine: ConicEngine) -> None:
    global _default_engine
    _default_engine = engine
