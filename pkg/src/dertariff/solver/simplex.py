"""Dense bounded-variable primal simplex.

Every row receives a slack column so the tableau starts from a (signed)
identity basis; rows whose slack cannot absorb the initial residual get an
artificial column and a phase-1 objective. Variables are kept at their
bounds while nonbasic, so upper bounds never become explicit rows.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .problem import EQ, GE, LE, LpProblem, LpSolution, Status

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
DEGENERATE_CYCLE = 50
REFACTOR_EVERY = 200

# nonbasic status codes
_AT_LO, _AT_HI, _FREE, _BASIC = 0, 1, 2, -1


class _Tableau:
    def __init__(self, M, rhs, lo, hi, basis, x):
        self.M = M
        self.rhs = rhs
        self.lo = lo
        self.hi = hi
        self.basis = basis
        self.x = x
        m, ntot = M.shape
        self.state = np.full(ntot, _AT_LO, dtype=np.int8)
        self.state[basis] = _BASIC
        nb = self.state != _BASIC
        free = nb & np.isneginf(lo) & np.isposinf(hi)
        self.state[free] = _FREE
        at_hi = nb & ~free & (x == hi) & (x != lo)
        self.state[at_hi] = _AT_HI
        self.cols = np.arange(ntot)
        self.sticky = np.zeros(ntot, dtype=bool)
        self.iterations = 0
        self.since_refactor = 0
        self.refactor()

    def refactor(self):
        B = self.M[:, self.basis]
        nb = self.state != _BASIC
        r = self.rhs - self.M[:, nb] @ self.x[nb]
        diag = np.diagonal(B).copy()
        if np.count_nonzero(B) == np.count_nonzero(diag):
            self.T = self.M / diag[:, None]
            self.x[self.basis] = r / diag
        else:
            lu = sla.lu_factor(B, check_finite=False)
            self.T = sla.lu_solve(lu, self.M, check_finite=False)
            self.x[self.basis] = sla.lu_solve(lu, r, check_finite=False)
        self.since_refactor = 0

    def refresh(self, cost):
        """Recompute basic values and reduced costs from a fresh factorisation.

        Cheaper than :meth:`refactor`: the tableau itself is left as is.
        """
        B = self.M[:, self.basis]
        nb = self.state != _BASIC
        r = self.rhs - self.M[:, nb] @ self.x[nb]
        lu = sla.lu_factor(B, check_finite=False)
        self.x[self.basis] = sla.lu_solve(lu, r, check_finite=False)
        y = sla.lu_solve(lu, cost[self.basis], trans=1, check_finite=False)
        self.since_refactor = 0
        d = cost - y @ self.M
        d[self.basis] = 0.0
        return d

    def reduced_costs(self, cost):
        return cost - cost[self.basis] @ self.T

    def run(self, cost, max_iter):
        """Primal simplex on ``cost``; returns ``"optimal"``, ``"unbounded"`` or ``"limit"``."""
        d = self.reduced_costs(cost)
        degenerate_run = 0
        bland = False
        lo, hi, x, state = self.lo, self.hi, self.x, self.state
        while True:
            if self.iterations >= max_iter:
                return "limit"
            movable = (state != _BASIC) & (hi > lo)
            inc = movable & (d < -OPT_TOL) & ((state == _AT_LO) | (state == _FREE))
            dec = movable & (d > OPT_TOL) & ((state == _AT_HI) | (state == _FREE))
            elig = inc | dec
            if not elig.any():
                if self.since_refactor:
                    # confirm optimality on a fresh factorisation
                    d = self.refresh(cost)
                    continue
                return "optimal"
            if bland:
                q = int(np.flatnonzero(elig)[0])
            else:
                q = int(np.argmax(np.where(elig, np.abs(d), 0.0)))
            direction = 1.0 if inc[q] else -1.0

            col = self.T[:, q]
            alpha = direction * col
            xb = x[self.basis]
            lob = lo[self.basis]
            hib = hi[self.basis]
            ratio = np.full(alpha.size, np.inf)
            relaxed = np.full(alpha.size, np.inf)
            dn = alpha > PIVOT_TOL
            up = alpha < -PIVOT_TOL
            with np.errstate(invalid="ignore"):
                ratio[dn] = (xb[dn] - lob[dn]) / alpha[dn]
                relaxed[dn] = (xb[dn] - lob[dn] + FEAS_TOL) / alpha[dn]
                ratio[up] = (hib[up] - xb[up]) / -alpha[up]
                relaxed[up] = (hib[up] - xb[up] + FEAS_TOL) / -alpha[up]
            ratio = np.where(np.isnan(ratio), np.inf, ratio)
            relaxed = np.where(np.isnan(relaxed), np.inf, relaxed)
            flip = hi[q] - lo[q]

            r = -1
            t = np.inf
            if np.isfinite(relaxed).any():
                if bland:
                    tmin = ratio.min()
                    cand = np.flatnonzero(ratio <= tmin + 1e-12)
                    r = int(cand[np.argmin(self.cols[self.basis[cand]])])
                else:
                    tmax = relaxed.min()
                    cand = np.flatnonzero(ratio <= tmax)
                    r = int(cand[np.argmax(np.abs(alpha[cand]))])
                t = max(ratio[r], 0.0)
            if flip <= t:
                t = flip
                r = -1
            if not np.isfinite(t):
                return "unbounded"

            self.iterations += 1
            if t > 1e-12:
                degenerate_run = 0
                bland = False
            else:
                degenerate_run += 1
                if degenerate_run > DEGENERATE_CYCLE:
                    bland = True

            x[q] += direction * t
            x[self.basis] = xb - t * alpha
            if r < 0:
                state[q] = _AT_HI if direction > 0 else _AT_LO
                continue

            leave = self.basis[r]
            if alpha[r] > 0:
                x[leave] = lo[leave]
                state[leave] = _AT_LO
            else:
                x[leave] = hi[leave]
                state[leave] = _AT_HI
            if np.isneginf(lo[leave]) and np.isposinf(hi[leave]):
                state[leave] = _FREE
            if self.sticky[leave]:
                hi[leave] = lo[leave] = x[leave]
            self._pivot(r, q)
            state[q] = _BASIC
            d -= d[q] * self.T[r]
            d[q] = 0.0
            self.since_refactor += 1
            if self.since_refactor >= REFACTOR_EVERY:
                self.refactor()
                d = self.reduced_costs(cost)

    def _pivot(self, r, q):
        T = self.T
        T[r] /= T[r, q]
        col = T[:, q].copy()
        col[r] = 0.0
        rows = np.flatnonzero(col)
        if rows.size:
            T[rows] -= np.outer(col[rows], T[r])
        self.basis[r] = q

    def drop_fixed_nonbasic(self):
        """Remove nonbasic columns with equal bounds; they can never re-enter."""
        fixed = (self.state != _BASIC) & (self.lo == self.hi)
        if not fixed.any():
            return
        self.rhs = self.rhs - self.M[:, fixed] @ self.x[fixed]
        keep = ~fixed
        newpos = np.cumsum(keep) - 1
        self.M = np.ascontiguousarray(self.M[:, keep])
        self.T = np.ascontiguousarray(self.T[:, keep])
        self.lo, self.hi = self.lo[keep], self.hi[keep]
        self.x, self.state = self.x[keep], self.state[keep]
        self.sticky = self.sticky[keep]
        self.basis = newpos[self.basis]
        self.cols = self.cols[keep]


def _initial_point(lo, hi):
    x = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
    return x.astype(float)


def simplex_solve(p: LpProblem, max_iter: int | None = None) -> LpSolution:
    """Solve ``p`` with the dense bounded simplex."""
    n, m = p.n_vars, p.n_rows
    if np.any(p.lo > p.hi + FEAS_TOL):
        return LpSolution(Status.INFEASIBLE, None, np.nan)
    A = p.A.toarray()
    b = p.b.copy()
    scale = np.abs(A).max(axis=1) if m else np.zeros(0)
    empty = scale == 0
    if empty.any():
        be, se = b[empty], p.senses[empty]
        bad = ((se == LE) & (be < -FEAS_TOL)) | ((se == GE) & (be > FEAS_TOL)) | (
            (se == EQ) & (np.abs(be) > FEAS_TOL))
        if bad.any():
            return LpSolution(Status.INFEASIBLE, None, np.nan)
        keep = ~empty
        A, b, scale, senses = A[keep], b[keep], scale[keep], p.senses[keep]
        m = A.shape[0]
    else:
        senses = p.senses
    A = A / scale[:, None] if m else A
    b = b / scale if m else b

    lo_x = p.lo.copy()
    hi_x = p.hi.copy()
    x0 = _initial_point(lo_x, hi_x)
    if m == 0:
        # bound-constrained only
        c = p.c
        if np.any((c < 0) & np.isposinf(hi_x)) or np.any((c > 0) & np.isneginf(lo_x)):
            return LpSolution(Status.UNBOUNDED, None, -np.inf)
        x = np.where(c < 0, hi_x, np.where(c > 0, lo_x, x0))
        return LpSolution(Status.OPTIMAL, x, p.objective_value(x))

    s_lo = np.where(senses == GE, -np.inf, 0.0)
    s_hi = np.where(senses == LE, np.inf, 0.0)
    resid = b - A @ x0
    s_val = np.clip(resid, s_lo, s_hi)
    art_r = resid - s_val
    need = np.abs(art_r) > FEAS_TOL
    k = int(need.sum())
    art_rows = np.flatnonzero(need)
    art_sign = np.sign(art_r[need])

    M = np.zeros((m, n + m + k))
    M[:, :n] = A
    M[:, n:n + m] = np.eye(m)
    M[art_rows, n + m + np.arange(k)] = art_sign
    lo = np.concatenate([lo_x, s_lo, np.zeros(k)])
    hi = np.concatenate([hi_x, s_hi, np.full(k, np.inf)])
    x = np.concatenate([x0, s_val, np.abs(art_r[need])])
    basis = np.arange(n, n + m)
    basis[art_rows] = n + m + np.arange(k)

    if max_iter is None:
        max_iter = 50 * (n + m) + 1000
    tab = _Tableau(M, b, lo, hi, basis, x)
    tab.drop_fixed_nonbasic()

    if k:
        art = tab.cols >= n + m
        tab.sticky = art.copy()
        res = tab.run(art.astype(float), max_iter)
        if res == "limit":
            return LpSolution(Status.LIMIT_REACHED, None, np.nan, tab.iterations)
        art = tab.cols >= n + m
        infeas = float(tab.x[art].sum())
        if infeas > 1e-7:
            return LpSolution(Status.INFEASIBLE, None, np.nan, tab.iterations)
        # artificials are pinned at zero for phase 2
        tab.hi[art] = 0.0
        tab.x[art & (tab.state != _BASIC)] = 0.0
        tab.state[art & (tab.state != _BASIC)] = _AT_LO
        _drive_out_artificials(tab, art)
        tab.drop_fixed_nonbasic()

    cost2 = np.zeros(n + m + k)
    cost2[:n] = p.c
    res = tab.run(cost2[tab.cols], max_iter)
    if res == "limit":
        return LpSolution(Status.LIMIT_REACHED, None, np.nan, tab.iterations)
    if res == "unbounded":
        return LpSolution(Status.UNBOUNDED, None, -np.inf, tab.iterations)
    xfull = np.concatenate([x0, np.zeros(m + k)])
    xfull[tab.cols] = tab.x
    xs = xfull[:n]
    # snap values sitting within tolerance of their bounds
    xs = np.where(np.abs(xs - p.lo) <= 1e-11, p.lo, xs)
    xs = np.where(np.abs(xs - p.hi) <= 1e-11, p.hi, xs)
    return LpSolution(Status.OPTIMAL, xs, p.objective_value(xs), tab.iterations)


def _drive_out_artificials(tab: _Tableau, art: np.ndarray):
    for r in range(tab.basis.size):
        if not art[tab.basis[r]]:
            continue
        row = tab.T[r]
        cand = np.flatnonzero((np.abs(row) > 1e-7) & (tab.state != _BASIC) & ~art
                              & (tab.hi > tab.lo))
        if cand.size == 0:
            continue
        q = int(cand[np.argmax(np.abs(row[cand]))])
        leave = tab.basis[r]
        tab.x[leave] = 0.0
        tab.state[leave] = _AT_LO
        tab._pivot(r, q)
        tab.state[q] = _BASIC
    tab.refactor()
