"""Best-first branch and bound over LP relaxations."""

from __future__ import annotations

import heapq
import itertools
import time

import numpy as np

from .lp import solve_lp
from .problem import (EQ, GE, LE, LpProblem, MilpLimits, MilpProblem, MilpSolution,
                      Status)

INT_TOL = 1e-6
ROW_TOL = 1e-7


def _gap(incumbent: float, bound: float) -> float:
    if not np.isfinite(incumbent):
        return np.inf
    return max(incumbent - bound, 0.0) / max(1.0, abs(incumbent))


def _with_bounds(lp: LpProblem, lo, hi) -> LpProblem:
    q = LpProblem.__new__(LpProblem)
    q.__dict__.update(lp.__dict__)
    q.lo, q.hi = lo, hi
    return q


class _Rounder:
    """Simple-rounding heuristic: snap fractional binaries while keeping every row satisfied."""

    def __init__(self, lp: LpProblem):
        self.A = lp.A
        self.Acsc = lp.A.tocsc()
        self.b = lp.b
        self.senses = lp.senses
        scale = abs(lp.A).max(axis=1).toarray().ravel() if lp.n_rows else np.zeros(0)
        scale[scale == 0] = 1.0
        self.tol = ROW_TOL * scale

    def _ok(self, rows, act):
        b, s, tol = self.b[rows], self.senses[rows], self.tol[rows]
        good = np.where(s == LE, act <= b + tol,
                        np.where(s == GE, act >= b - tol, np.abs(act - b) <= tol))
        return bool(np.all(good))

    def __call__(self, x, frac, lo, hi):
        x = x.copy()
        act = self.A @ x
        for j in frac:
            start, end = self.Acsc.indptr[j], self.Acsc.indptr[j + 1]
            rows = self.Acsc.indices[start:end]
            vals = self.Acsc.data[start:end]
            near = float(round(x[j]))
            for v in (near, 1.0 - near):
                if v < lo[j] or v > hi[j]:
                    continue
                trial = act[rows] + vals * (v - x[j])
                if self._ok(rows, trial):
                    act[rows] = trial
                    x[j] = v
                    break
            else:
                return None
        return x


def solve_milp(p: MilpProblem, limits: MilpLimits | None = None,
               lp_method: str = "auto") -> MilpSolution:
    """Solve a 0-1 mixed-integer program.

    Nodes are expanded in order of their LP bound; the branching variable is
    the most fractional binary (lowest index on ties). A rounding heuristic
    runs at every node and a fix-and-resolve dive at the root supplies early
    incumbents. ``nodes_explored`` counts LP solves below the root.
    """
    limits = limits or MilpLimits()
    lp = p.lp
    bins = p.binaries
    t0 = time.perf_counter()
    root = solve_lp(lp, lp_method)
    iters = root.iterations
    if root.status is Status.INFEASIBLE:
        return MilpSolution(Status.INFEASIBLE, None, np.nan, np.inf, 0, np.inf, iters)
    if root.status is Status.UNBOUNDED:
        return MilpSolution(Status.UNBOUNDED, None, -np.inf, np.inf, 0, -np.inf, iters)
    if root.status is not Status.OPTIMAL:
        return MilpSolution(Status.LIMIT_REACHED, None, np.nan, np.inf, 0, -np.inf, iters)

    rounder = _Rounder(lp)
    inc_x = None
    inc_obj = np.inf
    nodes = 0
    counter = itertools.count()

    def frac_of(x):
        v = x[bins]
        return bins[np.abs(v - np.round(v)) > INT_TOL]

    def offer(x):
        nonlocal inc_x, inc_obj
        x = x.copy()
        x[bins] = np.round(x[bins])
        obj = lp.objective_value(x)
        if obj < inc_obj - 1e-12:
            inc_x, inc_obj = x, obj

    def prune_tol():
        if inc_x is None:
            return 0.0
        return max(1e-9, limits.rel_gap * max(1.0, abs(inc_obj)))

    heap = [(root.objective, next(counter), lp.lo.copy(), lp.hi.copy(), root.x)]
    frac = frac_of(root.x)
    if frac.size:
        rounded = rounder(root.x, frac, lp.lo, lp.hi)
        if rounded is not None:
            offer(rounded)
    if frac.size and inc_x is None:
        fixed = lp.lo.copy(), lp.hi.copy()
        r = np.round(root.x[bins])
        fixed[0][bins] = r
        fixed[1][bins] = r
        dive = solve_lp(_with_bounds(lp, *fixed), lp_method)
        iters += dive.iterations
        if dive.status is Status.OPTIMAL:
            offer(dive.x)

    status = Status.OPTIMAL
    best_bound = root.objective
    exhausted = True
    while heap:
        bound, _, lo, hi, x = heapq.heappop(heap)
        best_bound = bound
        if inc_x is not None and bound >= inc_obj - prune_tol():
            exhausted = False
            break
        frac = frac_of(x)
        if frac.size == 0:
            offer(x)
            continue
        rounded = rounder(x, frac, lo, hi)
        if rounded is not None:
            offer(rounded)
            if bound >= inc_obj - prune_tol():
                continue
        if nodes >= limits.node_cap or (
                limits.time_cap is not None and time.perf_counter() - t0 > limits.time_cap):
            heapq.heappush(heap, (bound, next(counter), lo, hi, x))
            status = Status.LIMIT_REACHED
            break
        v = x[frac]
        j = int(frac[np.argmin(np.abs(v - 0.5))])
        first = 1.0 if x[j] >= 0.5 else 0.0
        for val in (first, 1.0 - first):
            clo, chi = lo.copy(), hi.copy()
            clo[j] = chi[j] = val
            child = solve_lp(_with_bounds(lp, clo, chi), lp_method)
            nodes += 1
            iters += child.iterations
            if child.status is Status.OPTIMAL and child.objective < inc_obj - prune_tol():
                heapq.heappush(heap, (child.objective, next(counter), clo, chi, child.x))

    if status is Status.LIMIT_REACHED:
        best_bound = min(h[0] for h in heap) if heap else best_bound
        if inc_x is None:
            return MilpSolution(Status.LIMIT_REACHED, None, np.nan, np.inf, nodes,
                                best_bound, iters)
        return MilpSolution(Status.LIMIT_REACHED, inc_x, inc_obj, _gap(inc_obj, best_bound),
                            nodes, best_bound, iters)
    if inc_x is None:
        return MilpSolution(Status.INFEASIBLE, None, np.nan, np.inf, nodes, np.inf, iters)
    best_bound = inc_obj if exhausted else min(best_bound, inc_obj)
    return MilpSolution(Status.OPTIMAL, inc_x, inc_obj, _gap(inc_obj, best_bound), nodes,
                        best_bound, iters)
