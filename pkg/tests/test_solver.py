import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dertariff.solver import (LpProblem, MilpLimits, MilpProblem, Status, solve_lp, solve_milp,
                              to_lp_string)
from dertariff.solver.simplex import simplex_solve


def lp(c, A, senses, b, lo=None, hi=None, offset=0.0):
    c = np.asarray(c, float)
    n = c.size
    lo = np.zeros(n) if lo is None else np.asarray(lo, float)
    hi = np.full(n, np.inf) if hi is None else np.asarray(hi, float)
    return LpProblem(c, np.atleast_2d(A), list(senses), b, lo, hi, offset)


class TestLp:
    def test_single_variable(self):
        s = solve_lp(lp([-1.0], [[1.0]], "<", [5.0]))
        assert s.status is Status.OPTIMAL
        assert s.x[0] == pytest.approx(5.0)
        assert s.objective == pytest.approx(-5.0)

    def test_two_dimensional_polytope(self):
        p = lp([-1, -1], [[1, 1], [1, 0], [0, 1]], "<<<", [3, 2, 2])
        s = solve_lp(p)
        # vertex enumeration of the polytope
        verts = [(0, 0), (2, 0), (0, 2), (2, 1), (1, 2)]
        best = min(-x - y for x, y in verts)
        assert s.objective == pytest.approx(best)
        assert s.x.sum() == pytest.approx(3.0)

    def test_contradictory_bounds(self):
        p = lp([1.0], [[1.0], [1.0]], "><", [2.0, 1.0])
        assert solve_lp(p).status is Status.INFEASIBLE

    def test_unbounded(self):
        assert solve_lp(lp([-1.0, 0.0], [[1.0, -1.0]], "<", [1.0])).status is Status.UNBOUNDED

    def test_equality_and_free_variable(self):
        p = lp([1.0, 2.0], [[1.0, 1.0]], "=", [4.0], lo=[-np.inf, 0.0])
        s = solve_lp(p)
        # x free, y >= 0: put everything on x
        assert s.x == pytest.approx([4.0, 0.0])

    def test_offset_enters_objective(self):
        s = solve_lp(lp([1.0], [[1.0]], ">", [2.0], offset=10.0))
        assert s.objective == pytest.approx(12.0)

    def test_highs_route_agrees(self):
        rng = np.random.default_rng(4)
        A = rng.random((6, 8))
        p = lp(-rng.random(8), A, "<" * 6, A.sum(axis=1), hi=np.ones(8) * 2)
        a, b = solve_lp(p, "simplex"), solve_lp(p, "highs")
        assert a.objective == pytest.approx(b.objective, abs=1e-8)

    def test_degenerate_problem_terminates(self):
        # many constraints active at the optimum
        n = 6
        A = np.vstack([np.eye(n), np.ones((1, n)), np.tril(np.ones((n, n)))])
        b = np.concatenate([np.ones(n), [n], np.arange(1, n + 1)])
        s = simplex_solve(lp(-np.ones(n), A, "<" * len(b), b))
        assert s.status is Status.OPTIMAL
        assert s.objective == pytest.approx(-n)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000))
    def test_strong_duality(self, seed):
        rng = np.random.default_rng(seed)
        m, n = rng.integers(2, 6), rng.integers(2, 6)
        A = rng.uniform(0.1, 2.0, (m, n))
        b = rng.uniform(0.5, 3.0, m)
        c = rng.uniform(0.5, 3.0, n)
        # primal: min c.x, Ax >= b, x >= 0; dual: max b.y, A'y <= c, y >= 0
        primal = solve_lp(lp(c, A, ">" * m, b))
        dual = solve_lp(lp(-b, A.T, "<" * n, c))
        assert primal.status is Status.OPTIMAL and dual.status is Status.OPTIMAL
        assert primal.objective == pytest.approx(-dual.objective, rel=1e-8, abs=1e-9)


def knapsack():
    p = lp([-5, -4, -3], [[2, 3, 1]], "<", [4], hi=[1, 1, 1])
    return MilpProblem(p, [0, 1, 2])


def brute_force(p: MilpProblem) -> float:
    best = np.inf
    for bits in itertools.product([0.0, 1.0], repeat=p.binaries.size):
        lo, hi = p.lp.lo.copy(), p.lp.hi.copy()
        lo[p.binaries] = hi[p.binaries] = bits
        s = solve_lp(LpProblem(p.lp.c, p.lp.A, p.lp.senses, p.lp.b, lo, hi, p.lp.offset))
        if s.status is Status.OPTIMAL:
            best = min(best, s.objective)
    return best


class TestMilp:
    def test_knapsack_matches_enumeration(self):
        p = knapsack()
        s = solve_milp(p)
        assert s.status is Status.OPTIMAL
        assert s.objective == pytest.approx(brute_force(p))
        # a = c = 1 weighs 3, value 8; a = b = 1 would weigh 5
        assert -s.objective == pytest.approx(8.0)
        assert s.values == pytest.approx([1, 0, 1])

    def test_integral_relaxation_needs_no_branching(self):
        p = MilpProblem(lp([1.0, 1.0], [[1.0, 1.0]], ">", [1.0], hi=[1, 1]), [0, 1])
        s = solve_milp(p)
        assert s.nodes_explored == 0
        assert s.objective == pytest.approx(1.0)

    def test_objective_is_self_consistent(self):
        p = knapsack()
        s = solve_milp(p)
        assert s.objective == pytest.approx(p.lp.objective_value(s.values), abs=1e-9)

    def test_infeasible_integer_program(self):
        # x + y = 1.5 with both binary
        p = MilpProblem(lp([1.0, 1.0], [[1.0, 1.0]], "=", [1.5], hi=[1, 1]), [0, 1])
        assert solve_milp(p).status is Status.INFEASIBLE

    def test_node_cap_reports_limit(self):
        rng = np.random.default_rng(0)
        n = 14
        w = rng.integers(5, 30, n).astype(float)
        v = w + rng.random(n)
        p = MilpProblem(lp(-v, [w], "<", [w.sum() / 2 + 0.5], hi=np.ones(n)), np.arange(n))
        s = solve_milp(p, MilpLimits(node_cap=2))
        assert s.status in (Status.LIMIT_REACHED, Status.OPTIMAL)
        if s.status is Status.LIMIT_REACHED:
            assert s.nodes_explored <= 4
            assert s.gap >= 0

    def test_binaries_must_be_unit_bounded(self):
        with pytest.raises(ValueError):
            MilpProblem(lp([1.0], [[1.0]], "<", [3.0], hi=[3.0]), [0])

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 100_000))
    def test_random_milp_matches_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        nb, nc = int(rng.integers(1, 7)), int(rng.integers(1, 6))
        n, m = nb + nc, int(rng.integers(2, 7))
        A = rng.normal(size=(m, n)) * (rng.random((m, n)) < 0.7)
        x0 = np.concatenate([rng.integers(0, 2, nb), rng.random(nc) * 2])  # inside the bounds below
        act = A @ x0
        senses = rng.choice(["<", ">"], size=m)
        b = np.where(senses == "<", act + rng.random(m), act - rng.random(m))
        hi = np.concatenate([np.ones(nb), rng.uniform(2, 5, nc)])
        p = MilpProblem(lp(rng.normal(size=n), A, senses, b, hi=hi), np.arange(nb))
        s = solve_milp(p)
        assert s.status is Status.OPTIMAL
        assert s.objective == pytest.approx(brute_force(p), abs=1e-6)


def test_lp_file_export():
    lines = [ln.strip() for ln in to_lp_string(knapsack()).splitlines()]
    heads = [ln for ln in lines if ln in ("Minimize", "Subject To", "Bounds", "Binaries", "End")]
    assert heads == ["Minimize", "Subject To", "Bounds", "Binaries", "End"]
    assert "r0: 2 x0 + 3 x1 + 1 x2 <= 4" in lines
    assert lines[lines.index("Binaries") + 1:lines.index("End")] == ["x0", "x1", "x2"]
