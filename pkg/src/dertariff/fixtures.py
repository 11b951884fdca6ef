"""Desk-scale synthetic inputs: historical traces, customer populations and a feeder.

Nothing here claims to resemble a real utility data set. The generators give
the pipeline plausible shapes (morning and evening demand peaks, seasonal PV,
morning/evening hot-water use) so that every stage can run end to end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import (DAYS_PER_YEAR, SLOTS_PER_DAY, BatteryParams, CustomerRecord,
                     CustomerTraces, EwhParams, Scenario, TariffSchedule)
from .powerflow import Network
from .synthesis import (HotWaterModel, HwInterval, HW_INTERVALS, fit_hotwater_model,
                        fit_seasonal_models, sample_hotwater_days, sample_seasonal_trace)

# share of customers, PV range (kW), battery (kWh)
PV_BATTERY_SIZES = [(0.7642, (3, 4), 6), (0.2033, (5, 6), 8), (0.0244, (7, 8), 10),
                    (0.0081, (9, 10), 12)]
EWH_VOLUMES = (125, 160, 250)
HW_SLOT_CAP_L = 30.0

_HOURS = (np.arange(SLOTS_PER_DAY) + 0.5) / 2.0
# mean draws per interval and Weibull magnitudes used by the history generator
_HW_RATES = (0.3, 0.1, 2.0, 1.2, 0.8, 0.6, 1.6, 1.0)
_HW_KAPPA, _HW_SIGMA = 12.0, 1.4


def reference_hotwater_model() -> HotWaterModel:
    return HotWaterModel([HwInterval(s, mu, _HW_KAPPA, _HW_SIGMA)
                          for s, mu in zip(HW_INTERVALS, _HW_RATES)])


def _season_weight(days: np.ndarray) -> np.ndarray:
    """+1 in mid-winter (late June), -1 in mid-summer."""
    return -np.cos(2 * np.pi * (days - 15) / DAYS_PER_YEAR)


def _demand_shape(level: float, evening: float, morning: float) -> np.ndarray:
    h = _HOURS
    return (level + morning * np.exp(-((h - 7.5) / 1.1) ** 2)
            + evening * np.exp(-((h - 19.0) / 1.8) ** 2)
            + 0.25 * evening * np.exp(-((h - 13.0) / 3.0) ** 2))


def clear_sky_pv(days: np.ndarray) -> np.ndarray:
    """Per-kWp clear-sky output, (days, 48); southern-hemisphere seasons."""
    w = _season_weight(days)[:, None]
    half_len = 6.5 - 1.3 * w
    peak = 0.78 - 0.12 * w
    x = (_HOURS[None, :] - 12.5) / half_len
    return peak * np.cos(0.5 * np.pi * np.clip(x, -1, 1)) ** 1.4


@dataclass
class History:
    """Historical-style traces for ``n`` customers: arrays are (n, days, 48)."""

    demand: np.ndarray
    pv_per_kwp: np.ndarray
    hw_draw: np.ndarray
    first_day: int = 1

    @property
    def n_customers(self) -> int:
        return self.demand.shape[0]

    @property
    def n_days(self) -> int:
        return self.demand.shape[1]


def make_history(n_customers: int, days: int = DAYS_PER_YEAR, seed=0,
                 first_day: int = 1) -> History:
    """Random but structured demand, PV and hot-water history."""
    rng = np.random.default_rng(seed)
    d = np.arange(first_day, first_day + days)
    season = _season_weight(d)
    demand = np.empty((n_customers, days, SLOTS_PER_DAY))
    pv = np.empty_like(demand)
    hw = np.empty_like(demand)
    sky = clear_sky_pv(d)
    hw_model = reference_hotwater_model()
    for c in range(n_customers):
        scale = rng.lognormal(0.0, 0.3)
        shape = _demand_shape(0.35, 1.6, 0.8) * scale
        daily = 1 + 0.25 * season[:, None] + rng.normal(0, 0.1, (days, 1))
        # AR(1) multiplicative noise
        eps = rng.normal(0, 0.18, (days, SLOTS_PER_DAY))
        for t in range(1, SLOTS_PER_DAY):
            eps[:, t] += 0.6 * eps[:, t - 1]
        dem = shape * daily * np.exp(eps - 0.5 * 0.18 ** 2 / (1 - 0.36))
        spikes = rng.random((days, SLOTS_PER_DAY)) < 0.02
        dem = dem + spikes * rng.uniform(1.0, 2.5, (days, SLOTS_PER_DAY))
        demand[c] = np.clip(dem, 0.05, 12.0)
        cloud = rng.beta(5, 1.5, (days, 1))
        flicker = np.clip(1 - rng.gamma(0.6, 0.12, (days, SLOTS_PER_DAY)), 0.1, 1)
        pv[c] = sky * cloud * flicker
        hw[c] = np.minimum(sample_hotwater_days(hw_model, rng.integers(2 ** 63), days),
                           HW_SLOT_CAP_L)
    return History(demand, pv, hw, first_day)


@dataclass
class SynthModels:
    demand: dict
    pv: dict
    hot_water: HotWaterModel


def fit_models(history: History, concentration: float = 0.2, demand_states: int = 40,
               pv_states: int = 20) -> SynthModels:
    """Seasonal demand (deviation from centroid) and PV (ratio to centroid) chains."""
    demand = fit_seasonal_models(list(history.demand), history.first_day,
                                 concentration=concentration, n_states=demand_states,
                                 anchor="additive")
    pv = fit_seasonal_models(list(history.pv_per_kwp), history.first_day,
                             concentration=concentration, n_states=pv_states, anchor="relative")
    hw = fit_hotwater_model(list(history.hw_draw))
    return SynthModels(demand, pv, hw)


@dataclass
class Pool:
    """Synthetic traces for a customer pool; PV is per kWp."""

    ids: list[str]
    demand: np.ndarray
    pv_per_kwp: np.ndarray
    hw_draw: np.ndarray
    first_day: int = 1

    @property
    def n_days(self) -> int:
        return self.demand.shape[1]

    def traces(self, i: int, pv_size: float | None) -> CustomerTraces:
        pv = self.pv_per_kwp[i] * (pv_size or 0.0)
        return CustomerTraces(self.demand[i], pv, self.hw_draw[i], self.first_day)


def sample_pool(models: SynthModels, n_customers: int, days: int, seed, first_day: int = 1,
                grid_limit: float = 15.0) -> Pool:
    """Draw one demand, PV and hot-water trace per customer from fitted models.

    Hot-water volume per slot is capped so a tank starting at its lower
    temperature limit can always recover within the slot.
    """
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    dem = np.empty((n_customers, days, SLOTS_PER_DAY))
    pv = np.empty_like(dem)
    hw = np.empty_like(dem)
    for i, ss in enumerate(root.spawn(n_customers)):
        s_dem, s_pv, s_hw = ss.spawn(3)
        dem[i] = np.clip(sample_seasonal_trace(models.demand, s_dem, days, first_day, 0.0),
                         0.0, grid_limit - 5.0)
        pv[i] = np.clip(sample_seasonal_trace(models.pv, s_pv, days, first_day, 0.0), 0.0, 1.0)
        hw[i] = np.minimum(sample_hotwater_days(models.hot_water, s_hw, days), HW_SLOT_CAP_L)
    ids = [f"C{i + 1:03d}" for i in range(n_customers)]
    return Pool(ids, dem, pv, hw, first_day)


@dataclass(frozen=True)
class Equipment:
    """Hardware a customer would own under Scenario III."""

    pv_size: float
    battery_kwh: float
    ewh_volume: int


def draw_equipment(n_customers: int, seed) -> list[Equipment]:
    rng = np.random.default_rng(seed)
    shares = np.array([s for s, _, _ in PV_BATTERY_SIZES])
    out = []
    for _ in range(n_customers):
        k = rng.choice(len(shares), p=shares / shares.sum())
        _, (lo, hi), batt = PV_BATTERY_SIZES[k]
        pv = float(rng.choice([lo, hi]))
        vol = int(rng.choice(EWH_VOLUMES, p=[0.3, 0.4, 0.3]))
        out.append(Equipment(pv, float(batt), vol))
    return out


def make_customer(cid: str, scenario: Scenario | str, tariff: TariffSchedule,
                  eq: Equipment, grid_limit: float = 15.0) -> CustomerRecord:
    scenario = Scenario(scenario)
    return CustomerRecord(
        id=cid, scenario=scenario, tariff=tariff, ewh=EwhParams.from_volume(eq.ewh_volume),
        battery=BatteryParams.from_capacity(eq.battery_kwh) if scenario.has_battery else None,
        pv_size=eq.pv_size if scenario.has_pv else None, grid_limit=grid_limit)


def _phase_impedance(r1: float, x1: float, km: float, zero_ratio: float = 4.0) -> np.ndarray:
    """3x3 phase impedance from positive- and zero-sequence cable data."""
    z1 = complex(r1, x1)
    z0 = complex(zero_ratio * r1, 3.0 * x1)
    zs, zm = (z0 + 2 * z1) / 3, (z0 - z1) / 3
    return km * (np.full((3, 3), zm) + np.eye(3) * (zs - zm))


def make_feeder(n_customers: int = 30, head_rating_a: float = 200.0, v0_pu: float = 1.03,
                trunk_nodes: int = 8, lateral_nodes: int = 20) -> Network:
    """A 30-node radial feeder: slack, head node, trunk and service laterals.

    Customers sit on the lateral nodes (two per node once those run out),
    cycling through phases a, b, c.
    """
    n_nodes = 2 + trunk_nodes + lateral_nodes
    edges, zs = [(0, 1)], [_phase_impedance(0.164, 0.07, 0.01)]
    prev = 1
    for t in range(trunk_nodes):
        node = 2 + t
        edges.append((prev, node))
        zs.append(_phase_impedance(0.164, 0.07, 0.05))
        prev = node
    first_lat = 2 + trunk_nodes
    for i in range(lateral_nodes):
        edges.append((2 + i % trunk_nodes, first_lat + i))
        zs.append(_phase_impedance(0.524, 0.08, 0.025))
    ids, pts = [], []
    for i in range(n_customers):
        ids.append(f"C{i + 1:03d}")
        pts.append((first_lat + i % lateral_nodes, i % 3))
    return Network(n_nodes, edges, np.array(zs), ids, pts, head_rating_a, 230.0, v0_pu,
                   name="desk-feeder")

