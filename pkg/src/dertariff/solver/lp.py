"""LP entry point.

Small problems go through the in-house dense simplex. Problems above
``DENSE_LIMIT`` variables (monthly HEMS windows are ~15,000 columns) are
handed to HiGHS through :func:`scipy.optimize.linprog`.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog

from .problem import EQ, GE, LE, LpProblem, LpSolution, Status
from .simplex import simplex_solve

DENSE_LIMIT = 500


def solve_lp(p: LpProblem, method: str = "auto") -> LpSolution:
    """Minimise ``p``.

    Parameters
    ----------
    p : LpProblem
    method : {"auto", "simplex", "highs"}
        ``auto`` picks the dense simplex below ``DENSE_LIMIT`` variables.
    """
    if method == "auto":
        method = "simplex" if p.n_vars <= DENSE_LIMIT else "highs"
    if method == "simplex":
        return simplex_solve(p)
    if method == "highs":
        return _highs_solve(p)
    raise ValueError(f"unknown LP method {method!r}")


def _highs_solve(p: LpProblem) -> LpSolution:
    A = p.A
    le, ge, eq = p.senses == LE, p.senses == GE, p.senses == EQ
    A_ub = None
    b_ub = None
    if le.any() or ge.any():
        import scipy.sparse as sp

        A_ub = sp.vstack([A[le], -A[ge]]).tocsr()
        b_ub = np.concatenate([p.b[le], -p.b[ge]])
    A_eq = A[eq] if eq.any() else None
    b_eq = p.b[eq] if eq.any() else None
    bounds = np.column_stack([np.where(np.isneginf(p.lo), -np.inf, p.lo),
                              np.where(np.isposinf(p.hi), np.inf, p.hi)])
    res = linprog(p.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                  method="highs", options={"primal_feasibility_tolerance": 1e-9,
                                           "dual_feasibility_tolerance": 1e-9})
    iters = int(getattr(res, "nit", 0) or 0)
    if res.status == 0:
        x = np.asarray(res.x, dtype=float)
        return LpSolution(Status.OPTIMAL, x, p.objective_value(x), iters)
    if res.status == 2:
        return LpSolution(Status.INFEASIBLE, None, np.nan, iters)
    if res.status == 3:
        return LpSolution(Status.UNBOUNDED, None, -np.inf, iters)
    return LpSolution(Status.LIMIT_REACHED, None, np.nan, iters)
