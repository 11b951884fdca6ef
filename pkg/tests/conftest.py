"""Shared desk-scale fixtures.

The heavy ones (the 7-day scheduling fixture and the 30-day study store) are
session scoped so the unit and acceptance suites solve them once.
"""

from dataclasses import dataclass, field

import numpy as np
import pytest

from dertariff.domain import RETAIL_TARIFFS, Scenario
from dertariff.fixtures import (draw_equipment, fit_models, make_customer, make_feeder,
                                make_history, sample_pool)
from dertariff.hems import HemsInstance, Horizon, run_rolling_horizon
from dertariff.montecarlo import ScheduleStore

HISTORY_SEED, POOL_SEED, EQUIP_SEED = 11, 12, 13
TARIFFS = ("Flat", "ToU", "FlatD", "ToUD")
SCENARIOS = ("I", "II", "III")


@dataclass
class DailyFixture:
    pool: object
    equipment: list
    customers: dict = field(default_factory=dict)   # (tariff, scen, cid) -> CustomerRecord
    traces: dict = field(default_factory=dict)      # (scen, cid) -> CustomerTraces
    schedules: dict = field(default_factory=dict)   # (tariff, scen, cid) -> Schedule
    seconds: float = 0.0


@pytest.fixture(scope="session")
def history():
    return make_history(20, 365, seed=HISTORY_SEED)


@pytest.fixture(scope="session")
def models(history):
    return fit_models(history)


@pytest.fixture(scope="session")
def daily_fixture(models):
    """10 customers x 4 tariffs x 3 scenarios x 7 days, daily horizon, from 1 February."""
    import time

    pool = sample_pool(models, 10, 7, POOL_SEED, first_day=32)
    eq = draw_equipment(10, EQUIP_SEED)
    fx = DailyFixture(pool, eq)
    t0 = time.perf_counter()
    for i, cid in enumerate(pool.ids):
        for scen in SCENARIOS:
            for tariff in TARIFFS:
                c = make_customer(cid, scen, RETAIL_TARIFFS[tariff], eq[i])
                tr = pool.traces(i, c.pv_size)
                fx.customers[tariff, scen, cid] = c
                fx.traces[scen, cid] = tr
                fx.schedules[tariff, scen, cid] = run_rolling_horizon(
                    HemsInstance(c, tr, Horizon.DAILY))
    fx.seconds = time.perf_counter() - t0
    return fx


@pytest.fixture(scope="session")
def feeder():
    return make_feeder(30)


@pytest.fixture(scope="session")
def study_stores(models):
    """Net-import schedules for 30 customers over 30 days, monthly horizon, ToU and ToUD."""
    pool = sample_pool(models, 30, 30, POOL_SEED, first_day=1)
    eq = draw_equipment(30, EQUIP_SEED)
    stores = {}
    for tariff in ("ToU", "ToUD"):
        store = ScheduleStore()
        for i, cid in enumerate(pool.ids):
            for scen in Scenario:
                c = make_customer(cid, scen, RETAIL_TARIFFS[tariff], eq[i])
                s = run_rolling_horizon(HemsInstance(c, pool.traces(i, c.pv_size),
                                                     Horizon.MONTHLY))
                store.add(cid, scen, s.net_import)
        stores[tariff] = store
    return stores


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
