"""Acceptance criteria, one test per criterion.

Each test prints a single ``CRITERION n: PASS|FAIL`` line with the measured
numbers, whether or not it fails.
"""

import itertools
import math
import time

import numpy as np
import pytest
from scipy.optimize import linprog

from dertariff.billing import annual_cost
from dertariff.domain import RETAIL_TARIFFS
from dertariff.fixtures import make_history, reference_hotwater_model
from dertariff.montecarlo import StudyConfig, allocate_scenarios, run_study
from dertariff.powerflow import (Network, power_balance_mismatch, run_timeseries,
                                 solve_snapshot)
from dertariff.solver import LpProblem, MilpProblem, Status, solve_milp
from dertariff.synthesis import (fit_cluster_model, sample_hotwater_events, simulate_chain)

from conftest import SCENARIOS, TARIFFS
from oracles import complementarity, monthly_max, replay_soc, replay_temp


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail
    return emit


# -- 1 ------------------------------------------------------------------------


def random_milp(rng):
    nb, nc = int(rng.integers(1, 13)), int(rng.integers(1, 21))
    n, m = nb + nc, int(rng.integers(2, 12))
    A = rng.normal(size=(m, n)) * (rng.random((m, n)) < 0.6)
    hi = np.concatenate([np.ones(nb), rng.uniform(2, 6, nc)])
    # a feasible witness inside the bounds keeps most instances feasible
    x0 = np.concatenate([rng.integers(0, 2, nb), rng.random(nc) * 2])
    act = A @ x0
    senses = rng.choice(["<", ">", "="], size=m, p=[0.6, 0.3, 0.1])
    b = np.where(senses == "<", act + rng.random(m),
                 np.where(senses == ">", act - rng.random(m), act))
    return MilpProblem(LpProblem(rng.normal(size=n), A, senses, b, np.zeros(n), hi),
                       np.arange(nb))


def enumerate_with_highs(p: MilpProblem) -> float:
    """Best objective over every binary assignment, each LP solved by HiGHS."""
    A = p.lp.A.toarray()
    le, ge, eq = (p.lp.senses == s for s in "<>=")
    A_ub = np.vstack([A[le], -A[ge]])
    b_ub = np.concatenate([p.lp.b[le], -p.lp.b[ge]])
    best = math.inf
    for bits in itertools.product([0.0, 1.0], repeat=p.binaries.size):
        lo, hi = p.lp.lo.copy(), p.lp.hi.copy()
        lo[p.binaries] = hi[p.binaries] = bits
        r = linprog(p.lp.c, A_ub=A_ub, b_ub=b_ub, A_eq=A[eq], b_eq=p.lp.b[eq],
                    bounds=list(zip(lo, hi)), method="highs")
        if r.status == 0:
            best = min(best, r.fun + p.lp.offset)
    return best


def test_criterion_1_solver_oracle(verdict):
    rng = np.random.default_rng(2024)
    spent, worst, bad, infeasible = 0.0, 0.0, [], 0
    for i in range(200):
        p = random_milp(rng)
        t0 = time.perf_counter()
        s = solve_milp(p)
        spent += time.perf_counter() - t0
        ref = enumerate_with_highs(p)
        if math.isinf(ref):
            infeasible += 1
            if s.status is not Status.INFEASIBLE:
                bad.append(i)
            continue
        err = abs(s.objective - ref) if s.status is Status.OPTIMAL else math.inf
        worst = max(worst, err)
        if err > 1e-6:
            bad.append(i)
    verdict(1, not bad and spent < 60.0,
            f"200 MILPs, {len(bad)} mismatches, worst |diff| {worst:.2e}, "
            f"{infeasible} infeasible, solve_milp total {spent:.1f} s")


# -- 2 ------------------------------------------------------------------------


def test_criterion_2_hems_physics(daily_fixture, verdict):
    fx = daily_fixture
    soc_err = temp_err = comp = 0.0
    checked = 0
    for (tariff, scen, cid), s in fx.schedules.items():
        if any(w.status != Status.OPTIMAL.value for w in s.windows):
            continue
        c = fx.customers[tariff, scen, cid]
        tr = fx.traces[scen, cid]
        checked += 1
        if c.battery is not None:
            soc_err = max(soc_err, float(np.abs(replay_soc(s, c.battery) - s.soc).max()))
        temp_err = max(temp_err, float(np.abs(replay_temp(s, c.ewh, tr.hw_draw)
                                              - s.ewh_temp).max()))
        comp = max(comp, complementarity(s))
    ok = (checked == 120 and soc_err <= 1e-6 and temp_err <= 1e-6 and comp <= 1e-6
          and fx.seconds < 600)
    verdict(2, ok, f"{checked}/120 optimal schedules, SOC err {soc_err:.1e} kWh, "
                   f"temp err {temp_err:.1e} C, complementarity {comp:.1e}, "
                   f"{fx.seconds:.0f} s")


# -- 3 ------------------------------------------------------------------------


def test_criterion_3_peak_clipping(daily_fixture, verdict):
    fx = daily_fixture
    violations, best_cut = [], 0.0
    for scen in SCENARIOS:
        for cid in fx.pool.ids:
            for energy, demand in (("Flat", "FlatD"), ("ToU", "ToUD")):
                e = monthly_max(fx.schedules[energy, scen, cid].grid_import, fx.pool.first_day)
                d = monthly_max(fx.schedules[demand, scen, cid].grid_import, fx.pool.first_day)
                for m in e:
                    if d[m] > e[m] + 1e-6:
                        violations.append((scen, cid, demand, m, e[m], d[m]))
                    if scen == "III" and e[m] > 0:
                        best_cut = max(best_cut, 1 - d[m] / e[m])
    verdict(3, not violations and best_cut >= 0.10,
            f"{len(violations)} demand-tariff peaks above their energy-tariff peak, "
            f"largest battery cut {100 * best_cut:.1f}%")


# -- 4 ------------------------------------------------------------------------


def test_criterion_4_der_ordering(daily_fixture, verdict):
    fx = daily_fixture
    first = fx.pool.first_day

    def median_peak(scen):
        return float(np.median([max(monthly_max(fx.schedules["FlatD", scen, c].grid_import,
                                                first).values()) for c in fx.pool.ids]))

    peak_i, peak_iii = median_peak("I"), median_peak("III")
    broken = []
    for tariff in TARIFFS:
        t = RETAIL_TARIFFS[tariff]
        for cid in fx.pool.ids:
            cost = [annual_cost(t, fx.schedules[tariff, s, cid].grid_import,
                                fx.schedules[tariff, s, cid].grid_export, first).total
                    for s in SCENARIOS]
            if not cost[2] <= cost[1] + 1e-9 <= cost[0] + 2e-9:
                broken.append((tariff, cid, cost))
    verdict(4, peak_iii < peak_i and not broken,
            f"median FlatD peak Sc.III {peak_iii:.2f} kW vs Sc.I {peak_i:.2f} kW, "
            f"{len(broken)} cost-ordering breaks")


# -- 5 ------------------------------------------------------------------------


def test_criterion_5_bill_objective(daily_fixture, verdict):
    fx = daily_fixture
    first = fx.pool.first_day
    worst_rel = worst_peak = 0.0
    for (tariff, scen, cid), s in fx.schedules.items():
        t = RETAIL_TARIFFS[tariff]
        if not t.kind.has_demand_charge:
            b = annual_cost(t, s.grid_import, s.grid_export, first)
            worst_rel = max(worst_rel, abs(b.total - b.fixed - s.objective_total)
                            / max(1.0, abs(s.objective_total)))
            continue
        if all(w.status == Status.OPTIMAL.value for w in s.windows):
            real = monthly_max(s.grid_import, first)
            for m, v in s.peak_var.items():
                worst_peak = max(worst_peak, abs(v - real[m]))
    verdict(5, worst_rel <= 1e-5 and worst_peak <= 1e-6,
            f"energy bill vs objective rel err {worst_rel:.1e}, "
            f"peak variable vs realised max {worst_peak:.1e} kW")


# -- 6 ------------------------------------------------------------------------


def test_criterion_6_power_flow(feeder, verdict):
    two = Network(2, [(0, 1)], np.eye(3)[None] * (0.1 + 0.05j), ["L"], [(1, 0)], 100.0)
    v = 230.0 + 0j
    for _ in range(200):
        v = 230.0 - (0.1 + 0.05j) * np.conj(2000.0 / v)
    got = abs(solve_snapshot(two, [2.0], tol_pu=1e-12).voltages[1, 0])
    err_2bus = abs(got - abs(v))

    h = make_history(30, 365, seed=21)
    inj = h.demand - 4.0 * h.pv_per_kwp
    res, V, I = run_timeseries(feeder, inj, return_raw=True)
    p = inj.reshape(feeder.n_customers, -1).T
    mism = power_balance_mismatch(feeder, p, V, I)[res.converged]

    z = np.full((3, 3), 0.02 + 0.01j) + np.eye(3) * (0.05 + 0.03j)
    sym = Network(3, [(0, 1), (1, 2)], np.stack([z, z]), list("ABC"),
                  [(2, 0), (2, 1), (2, 2)], 300.0)
    mags = solve_snapshot(sym, [3.0] * 3, tol_pu=1e-12).voltage_pu(sym)[2]
    spread = float(mags.max() - mags.min())

    ok = err_2bus <= 1e-6 and mism.size > 0 and mism.max() <= 1e-6 and spread <= 1e-9
    verdict(6, ok, f"2-bus |V1| {got:.6f} V err {err_2bus:.1e}; balance max {mism.max():.1e} pu "
                   f"over {mism.size} converged slots; phase spread {spread:.1e} pu")


# -- 7 ------------------------------------------------------------------------


def test_criterion_7_samplers(verdict):
    t0 = time.perf_counter()
    model = reference_hotwater_model()
    rng = np.random.default_rng(77)
    N = 10_000
    counts = np.zeros((N, len(model.intervals)), dtype=int)
    sizes = [[] for _ in model.intervals]
    for d in range(N):
        which, _, vol = sample_hotwater_events(model, rng)
        np.add.at(counts[d], which, 1)
        for j, v in zip(which, vol):
            sizes[j].append(v)
    mu = np.array([iv.mu for iv in model.intervals])
    mean_ok = np.all(np.abs(counts.mean(axis=0) - mu) <= 3 * np.sqrt(mu / N))
    j2 = int(np.flatnonzero(mu == 2.0)[0])
    p0 = float((counts[:, j2] == 0).mean())

    # Weibull magnitudes: 10,000 draws from the busiest interval
    draws = np.array(sizes[j2][:N])
    iv = model.intervals[j2]
    target = iv.kappa * math.gamma(1 + 1 / iv.sigma)
    se = draws.std(ddof=1) / math.sqrt(draws.size)

    # Markov chain: fit a two-state chain, sample it, compare frequencies
    truth = np.array([[0.95, 0.05], [0.05, 0.95]])
    path = simulate_chain(truth, np.array([1.0, 0.0]), 200 * 48, rng)
    fit = fit_cluster_model([path.reshape(200, 48) + 0.5], n_states=2, penalty=1e9)
    P = fit.transition[0]
    sample = simulate_chain(P, fit.initial[0], N, rng)
    tc = np.zeros((2, 2))
    np.add.at(tc, (sample[:-1], sample[1:]), 1)
    l1 = float(np.abs(tc / tc.sum(axis=1, keepdims=True) - P).sum(axis=1).max())
    spent = time.perf_counter() - t0

    ok = (mean_ok and abs(p0 - math.exp(-2)) <= 0.01 and draws.size == N
          and abs(draws.mean() - target) <= 3 * se and l1 <= 0.02 and spent < 120)
    verdict(7, ok, f"count means within 3 sqrt(mu/N): {bool(mean_ok)}; P0(mu=2) {p0:.4f}; "
                   f"Weibull mean {draws.mean():.3f} vs {target:.3f} (SE {se:.3f}); "
                   f"Markov L1 {l1:.4f}; {spent:.0f} s")


# -- 8 and 9 ------------------------------------------------------------------

STUDY_P, STUDY_B, STUDY_RUNS, STUDY_SEED = (25, 50, 75, 100), (0, 40, 80), 10, 5


@pytest.fixture(scope="module")
def fixture_study(request, feeder):
    t0 = time.perf_counter()
    stores = request.getfixturevalue("study_stores")
    results = {t: run_study(StudyConfig(feeder, stores[t], STUDY_P, STUDY_B, STUDY_RUNS,
                                        STUDY_SEED, t))
               for t in stores}
    return stores, results, time.perf_counter() - t0


def test_criterion_8_monte_carlo(fixture_study, feeder, tmp_path, verdict):
    stores, results, spent = fixture_study
    split = tuple(sum(s.value == k for s in allocate_scenarios(range(100), 50, 40, 0))
                  for k in ("I", "II", "III"))
    again = run_study(StudyConfig(feeder, stores["ToU"], STUDY_P, STUDY_B, STUDY_RUNS,
                                  STUDY_SEED, "ToU"))
    results["ToU"].write_csv(tmp_path / "a.csv")
    again.write_csv(tmp_path / "b.csv")
    results["ToU"].write_details(tmp_path / "a.json")
    again.write_details(tmp_path / "b.json")
    same = ((tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
            and (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes())
    combos = len(StudyConfig(feeder, stores["ToU"], STUDY_P, STUDY_B).combos())
    rows = len(results["ToU"].rows)
    ok = split == (50, 30, 20) and same and combos == 12 and rows == 120 and spent < 900
    verdict(8, ok, f"allocation {split}; rerun byte-identical {same}; {combos} combos x "
                   f"{STUDY_RUNS} runs = {rows} rows per tariff; 30 customers, "
                   f"{stores['ToU'].n_days} days, schedules + both studies {spent:.0f} s")


def test_criterion_9_loading_direction(fixture_study, verdict):
    _, results, _ = fixture_study
    med = {(t, b): float(np.median(results[t].values(75, b))) for t in results for b in (0, 80)}
    ok = med["ToU", 80] >= med["ToU", 0] and med["ToUD", 80] <= med["ToUD", 0]
    verdict(9, ok, f"p=75 median head loading ToU b0 {med['ToU', 0]:.1f}% b80 "
                   f"{med['ToU', 80]:.1f}%; ToUD b0 {med['ToUD', 0]:.1f}% b80 "
                   f"{med['ToUD', 80]:.1f}%")
