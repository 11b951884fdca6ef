import numpy as np
import pytest

from dertariff.domain import Scenario
from dertariff.fixtures import make_feeder
from dertariff.montecarlo import (ScheduleStore, StudyConfig, StudyError, allocate_scenarios,
                                  run_study, summarize)
from dertariff.powerflow import run_timeseries


def counts(scen):
    return tuple(sum(s is k for s in scen) for k in Scenario)


class TestAllocation:
    def test_fifty_forty(self):
        assert counts(allocate_scenarios(range(100), 50, 40, 0)) == (50, 30, 20)

    def test_no_pv(self):
        assert counts(allocate_scenarios(range(37), 0, 80, 1)) == (37, 0, 0)

    def test_full_penetration(self):
        assert counts(allocate_scenarios(range(30), 100, 100, 2)) == (0, 0, 30)

    @pytest.mark.parametrize("n,p,b", [(30, 75, 40), (7, 33, 50), (11, 25, 80), (1, 50, 50)])
    def test_quota_sums_and_rounding(self, n, p, b):
        c = counts(allocate_scenarios(range(n), p, b, 3))
        assert sum(c) == n
        exact = (n * (100 - p) / 100, n * p * (100 - b) / 1e4, n * p * b / 1e4)
        assert all(abs(ci - e) < 1 for ci, e in zip(c, exact))

    def test_seeded_partition(self):
        a = allocate_scenarios(range(40), 50, 50, 9)
        b = allocate_scenarios(range(40), 50, 50, 9)
        c = allocate_scenarios(range(40), 50, 50, 10)
        assert a == b and a != c

    def test_uniform_partition(self):
        # every customer is equally likely to be the PV owner
        hits = np.zeros(10)
        for seed in range(4000):
            hits += [s is not Scenario.I for s in allocate_scenarios(range(10), 30, 0, seed)]
        assert hits / 4000 == pytest.approx(np.full(10, 0.3), abs=0.03)

    def test_bad_levels(self):
        with pytest.raises(ValueError):
            allocate_scenarios(range(5), 120, 0, 0)


def small_store(n=6, days=2, seed=0):
    rng = np.random.default_rng(seed)
    store = ScheduleStore()
    for i in range(n):
        cid = f"C{i + 1:03d}"
        base = rng.uniform(0.2, 2.0, (days, 48))
        store.add(cid, "I", base)
        store.add(cid, "II", base - 2.5)
        store.add(cid, "III", base - 1.0)
    return store


def small_net(n=6):
    return make_feeder(n, head_rating_a=60.0, trunk_nodes=3, lateral_nodes=6)


class TestStudy:
    def test_degenerate_sweep(self):
        res = run_study(StudyConfig(small_net(), small_store(), (0,), (0, 40, 80), runs=3,
                                    master_seed=4))
        assert len(res.rows) == 3
        assert all(set(r.allocation.values()) == {"I"} for r in res.rows)
        assert len({tuple(r.placement) for r in res.rows}) > 1

    def test_combos_and_rows(self):
        cfg = StudyConfig(small_net(), small_store(), (0, 50, 100), (0, 50), runs=2)
        assert cfg.combos() == [(0, 0), (50, 0), (50, 50), (100, 0), (100, 50)]
        res = run_study(cfg)
        assert [(r.p, r.b, r.run) for r in res.rows] == [
            (p, b, k) for p, b in cfg.combos() for k in range(2)]

    def test_bit_identical_results(self, tmp_path):
        outs = []
        for k in range(2):
            res = run_study(StudyConfig(small_net(), small_store(), (0, 50), (0, 50), runs=3,
                                        master_seed=21, tariff="ToU"))
            res.write_csv(tmp_path / f"r{k}.csv")
            res.write_details(tmp_path / f"d{k}.json")
            outs.append(res)
        assert (tmp_path / "r0.csv").read_bytes() == (tmp_path / "r1.csv").read_bytes()
        assert (tmp_path / "d0.json").read_bytes() == (tmp_path / "d1.json").read_bytes()

    def test_threads_do_not_change_results(self):
        a = run_study(StudyConfig(small_net(), small_store(), (50,), (50,), runs=4,
                                  master_seed=2))
        b = run_study(StudyConfig(small_net(), small_store(), (50,), (50,), runs=4,
                                  master_seed=2, threads=3))
        assert [r.row() for r in a.rows] == [r.row() for r in b.rows]

    def test_more_runs_extend_fewer(self):
        a = run_study(StudyConfig(small_net(), small_store(), (50,), (40,), runs=2,
                                  master_seed=5))
        b = run_study(StudyConfig(small_net(), small_store(), (50,), (40,), runs=5,
                                  master_seed=5))
        assert [r.row() for r in a.rows] == [r.row() for r in b.rows[:2]]

    def test_loading_is_head_current_over_rating(self):
        net = small_net()
        store = small_store()
        res = run_study(StudyConfig(net, store, (0,), (0,), runs=1, master_seed=0))
        r = res.rows[0]
        inj = np.stack([store.get(c, Scenario.I).ravel() for c in r.placement], axis=1)
        head = run_timeseries(net, inj).head_current.max()
        assert r.max_head_loading_pct == pytest.approx(100 * head / 60.0)

    def test_missing_scenario_aborts(self):
        store = small_store()
        del store.series["C002"][Scenario.III]
        with pytest.raises(StudyError, match="missing"):
            run_study(StudyConfig(small_net(), store, (50,), (50,), runs=1))

    def test_scenario_one_only_is_enough_without_pv(self):
        store = ScheduleStore({f"C{i + 1:03d}": {"I": np.ones((1, 48))} for i in range(6)})
        assert len(run_study(StudyConfig(small_net(), store, (0,), (80,), runs=2)).rows) == 2

    def test_customer_count_must_match(self):
        with pytest.raises(StudyError):
            run_study(StudyConfig(make_feeder(8), small_store(), (0,), (0,), runs=1))

    def test_store_csv_round_trip(self, tmp_path):
        store = small_store(3)
        back = ScheduleStore.read_csv(store.write_csv(tmp_path / "s.csv"))
        for cid in store.customer_ids:
            for sc in Scenario:
                assert back.get(cid, sc) == pytest.approx(store.get(cid, sc), abs=1e-6)

    def test_store_rejects_mismatched_days(self):
        store = small_store(2, days=2)
        with pytest.raises(ValueError):
            store.add("C009", "I", np.zeros((3, 48)))


def test_summary_quartiles():
    s = summarize([1, 2, 3, 4, 5])
    assert s == {"min": 1.0, "q1": 2.0, "median": 3.0, "q3": 4.0, "max": 5.0}
