"""Shared vocabulary: time indexing, tariffs, DER parameters and customer records."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

SLOTS_PER_DAY = 48
DT_H = 0.5
DAYS_PER_YEAR = 365
MONTH_LENGTHS = (31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)
_MONTH_ENDS = np.cumsum(MONTH_LENGTHS)

DEFAULT_T_AMBIENT = 20.0
DEFAULT_T_INLET = 15.0
DEFAULT_GRID_LIMIT_KW = 15.0
ROUND_TRIP_EFFICIENCY = 0.90


def month_of_day(day) -> np.ndarray | int:
    """Calendar month (1..12) of a day-of-year (1..365), non-leap year."""
    d = np.asarray(day)
    if np.any(d < 1) or np.any(d > DAYS_PER_YEAR):
        raise ValueError(f"day must lie in 1..{DAYS_PER_YEAR}")
    m = np.searchsorted(_MONTH_ENDS, d, side="left") + 1
    return int(m) if m.ndim == 0 else m


def month_first_day(month: int) -> int:
    return 1 if month == 1 else int(_MONTH_ENDS[month - 2]) + 1


@dataclass(frozen=True)
class TimeSlot:
    day: int
    slot: int

    def __post_init__(self):
        if not 1 <= self.slot <= SLOTS_PER_DAY:
            raise ValueError(f"slot {self.slot} outside 1..{SLOTS_PER_DAY}")
        if not 1 <= self.day <= DAYS_PER_YEAR:
            raise ValueError(f"day {self.day} outside 1..{DAYS_PER_YEAR}")

    @property
    def month(self) -> int:
        return month_of_day(self.day)


class TouPeriod(str, enum.Enum):
    OFF_PEAK = "OffPeak"
    SHOULDER = "Shoulder"
    PEAK = "Peak"


def tou_period(slot: int) -> TouPeriod:
    """Time-of-use period of a half-hour slot, judged by the slot's start time.

    Peak 07-09 and 17-20, shoulder 09-17 and 20-22, off-peak 22-07.
    """
    if not isinstance(slot, (int, np.integer)) or not 1 <= slot <= SLOTS_PER_DAY:
        raise ValueError(f"slot must be an integer in 1..{SLOTS_PER_DAY}, got {slot!r}")
    hour = (slot - 1) / 2
    if 7 <= hour < 9 or 17 <= hour < 20:
        return TouPeriod.PEAK
    if 9 <= hour < 17 or 20 <= hour < 22:
        return TouPeriod.SHOULDER
    return TouPeriod.OFF_PEAK


class TariffKind(str, enum.Enum):
    FLAT = "Flat"
    TOU = "ToU"
    FLATD = "FlatD"
    TOUD = "ToUD"

    @property
    def has_demand_charge(self) -> bool:
        return self in (TariffKind.FLATD, TariffKind.TOUD)

    @property
    def is_tou(self) -> bool:
        return self in (TariffKind.TOU, TariffKind.TOUD)


class PeakVariant(str, enum.Enum):
    MONTHLY_MAX = "MonthlyMax"
    TOP_FOUR_DAILY_AVG = "TopFourDailyAvg"


@dataclass(frozen=True)
class TouRates:
    off_peak: float
    shoulder: float
    peak: float

    def rate(self, period: TouPeriod) -> float:
        return {TouPeriod.OFF_PEAK: self.off_peak, TouPeriod.SHOULDER: self.shoulder,
                TouPeriod.PEAK: self.peak}[period]


@dataclass(frozen=True)
class TariffSchedule:
    """Fixed, energy and demand charges of one tariff, all in dollars.

    Energy rates are $/kWh, the demand charge $/kW/month and the fixed charge
    $/day.
    """

    kind: TariffKind
    fixed_daily: float
    fit: float
    flat_rate: float | None = None
    tou_rates: TouRates | None = None
    demand_charge: float | None = None
    peak_variant: PeakVariant = PeakVariant.MONTHLY_MAX
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", TariffKind(self.kind))
        object.__setattr__(self, "peak_variant", PeakVariant(self.peak_variant))
        if self.kind.is_tou:
            if self.tou_rates is None or self.flat_rate is not None:
                raise ValueError(f"{self.kind.value} needs tou_rates and no flat_rate")
        else:
            if self.flat_rate is None or self.tou_rates is not None:
                raise ValueError(f"{self.kind.value} needs flat_rate and no tou_rates")
        if self.kind.has_demand_charge:
            if self.demand_charge is None or self.demand_charge <= 0:
                raise ValueError(f"{self.kind.value} needs a positive demand charge")
        elif self.demand_charge not in (None, 0, 0.0):
            raise ValueError(f"{self.kind.value} carries no demand charge")
        rates = [self.fixed_daily, self.fit]
        if self.flat_rate is not None:
            rates.append(self.flat_rate)
        if self.tou_rates is not None:
            rates += [self.tou_rates.off_peak, self.tou_rates.shoulder, self.tou_rates.peak]
        if self.demand_charge is not None:
            rates.append(self.demand_charge)
        if any((r < 0) or not math.isfinite(r) for r in rates):
            raise ValueError("tariff rates must be finite and non-negative")

    @property
    def peak_charge(self) -> float:
        return self.demand_charge or 0.0

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.kind.has_demand_charge and self.peak_variant is PeakVariant.TOP_FOUR_DAILY_AVG:
            return self.kind.value + "4"
        return self.kind.value

    def slot_prices(self) -> np.ndarray:
        """Import price of each of the 48 slots, $/kWh."""
        return np.array([price_at(self, TimeSlot(1, s)) for s in range(1, SLOTS_PER_DAY + 1)])

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["peak_variant"] = self.peak_variant.value
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TariffSchedule":
        d = dict(d)
        if d.get("tou_rates") is not None:
            d["tou_rates"] = TouRates(**d["tou_rates"])
        return cls(**d)


def price_at(tariff: TariffSchedule, ts: TimeSlot) -> float:
    """Import energy price ($/kWh) in effect during ``ts``."""
    if tariff.kind.is_tou:
        return tariff.tou_rates.rate(tou_period(ts.slot))
    return tariff.flat_rate


# Retail prices (c/kWh converted to $/kWh) with the network demand charge
# passed through to the customer.
_FIXED = 1.5511
_FIT = 0.090
_DEMAND = 4.2112

RETAIL_TARIFFS: dict[str, TariffSchedule] = {
    "Flat": TariffSchedule(TariffKind.FLAT, _FIXED, _FIT, flat_rate=0.313170),
    "ToU": TariffSchedule(TariffKind.TOU, _FIXED, _FIT,
                          tou_rates=TouRates(0.213400, 0.371470, 0.385880)),
    "FlatD": TariffSchedule(TariffKind.FLATD, _FIXED, _FIT, flat_rate=0.235018,
                            demand_charge=_DEMAND),
    "ToUD": TariffSchedule(TariffKind.TOUD, _FIXED, _FIT,
                           tou_rates=TouRates(0.188532, 0.279319, 0.286750),
                           demand_charge=_DEMAND),
}
RETAIL_TARIFFS["FlatD4"] = TariffSchedule(
    TariffKind.FLATD, _FIXED, _FIT, flat_rate=0.235018, demand_charge=_DEMAND,
    peak_variant=PeakVariant.TOP_FOUR_DAILY_AVG)
RETAIL_TARIFFS["ToUD4"] = TariffSchedule(
    TariffKind.TOUD, _FIXED, _FIT, tou_rates=TouRates(0.188532, 0.279319, 0.286750),
    demand_charge=_DEMAND, peak_variant=PeakVariant.TOP_FOUR_DAILY_AVG)

# Network (DNSP) charges only; no feed-in component.
NETWORK_TARIFFS: dict[str, TariffSchedule] = {
    "Flat": TariffSchedule(TariffKind.FLAT, 0.8568, 0.0, flat_rate=0.110321, name="NetFlat"),
    "ToU": TariffSchedule(TariffKind.TOU, 0.8568, 0.0,
                          tou_rates=TouRates(0.046287, 0.126922, 0.139934), name="NetToU"),
    "FlatD": TariffSchedule(TariffKind.FLATD, 0.8568, 0.0, flat_rate=0.032169,
                            demand_charge=_DEMAND, name="NetFlatD"),
    "ToUD": TariffSchedule(TariffKind.TOUD, 0.8568, 0.0,
                           tou_rates=TouRates(0.021419, 0.034771, 0.040804),
                           demand_charge=_DEMAND, name="NetToUD"),
}

ENERGY_TARIFFS = ("Flat", "ToU")
DEMAND_TARIFFS = ("FlatD", "ToUD")
STUDY_TARIFFS = ENERGY_TARIFFS + DEMAND_TARIFFS


def get_tariff(name_or_path: str | Path) -> TariffSchedule:
    """Look up a built-in retail preset by name, or load a tariff JSON file."""
    key = str(name_or_path)
    if key in RETAIL_TARIFFS:
        return RETAIL_TARIFFS[key]
    if key.startswith("network:") and key[8:] in NETWORK_TARIFFS:
        return NETWORK_TARIFFS[key[8:]]
    path = Path(key)
    if not path.exists():
        raise KeyError(f"unknown tariff preset or file: {key}")
    return load_tariff(path)


def load_tariff(path) -> TariffSchedule:
    return TariffSchedule.from_dict(json.loads(Path(path).read_text()))


def save_tariff(tariff: TariffSchedule, path) -> None:
    Path(path).write_text(json.dumps(tariff.to_dict(), indent=2))


@dataclass(frozen=True)
class BatteryParams:
    capacity: float
    soc_min: float
    p_charge_max: float
    p_discharge_max: float
    eta_charge: float
    eta_discharge: float
    soc_initial: float

    def __post_init__(self):
        if not 0 <= self.soc_min <= self.soc_initial <= self.capacity:
            raise ValueError("need 0 <= soc_min <= soc_initial <= capacity")
        if not (0 < self.eta_charge <= 1 and 0 < self.eta_discharge <= 1):
            raise ValueError("efficiencies must lie in (0, 1]")
        if self.p_charge_max <= 0 or self.p_discharge_max <= 0:
            raise ValueError("power limits must be positive")

    @classmethod
    def from_capacity(cls, capacity_kwh: float, c_rate: float = 0.5,
                      initial_fraction: float = 0.5) -> "BatteryParams":
        """10 %-100 % usable window, 90 % round trip split evenly between directions."""
        eta = math.sqrt(ROUND_TRIP_EFFICIENCY)
        soc_min = 0.1 * capacity_kwh
        return cls(capacity=capacity_kwh, soc_min=soc_min,
                   p_charge_max=c_rate * capacity_kwh, p_discharge_max=c_rate * capacity_kwh,
                   eta_charge=eta, eta_discharge=eta,
                   soc_initial=max(soc_min, initial_fraction * capacity_kwh))


# (volume L, element kW, surface area m2) per tank size
EWH_SIZES = {80: (1.8, 1.114), 125: (3.6, 1.500), 160: (3.6, 1.768), 250: (4.8, 2.381)}


@dataclass(frozen=True)
class EwhParams:
    volume: float
    element_rating: float
    surface_area: float
    conductance: float = 1.0
    density: float = 1000.0
    specific_heat: float = 4.18
    eta_thermal: float = 1.0
    t_min: float = 60.0
    t_max: float = 82.0
    t_inlet: float = DEFAULT_T_INLET
    t_ambient: float = DEFAULT_T_AMBIENT
    t_initial: float = 65.0

    def __post_init__(self):
        positive = (self.volume, self.element_rating, self.surface_area, self.conductance,
                    self.density, self.specific_heat, self.eta_thermal)
        if any(v <= 0 for v in positive):
            raise ValueError("physical EWH parameters must be positive")
        if not self.t_min <= self.t_initial <= self.t_max:
            raise ValueError("need t_min <= t_initial <= t_max")

    @classmethod
    def from_volume(cls, volume_l: int, **overrides) -> "EwhParams":
        element, area = EWH_SIZES[int(volume_l)]
        return cls(volume=float(volume_l), element_rating=element, surface_area=area,
                   **overrides)

    @property
    def heat_capacity(self) -> float:
        """Thermal capacity of the full tank, kJ/degC."""
        return self.density * (self.volume / 1000.0) * self.specific_heat

    @property
    def psi(self) -> float:
        """Temperature rise per kW held for one slot, degC/kW."""
        return 3600.0 * DT_H / self.heat_capacity

    @property
    def lam(self) -> float:
        """Fraction of the tank-to-ambient difference lost per slot."""
        return 3.6 * self.conductance * self.surface_area * DT_H / self.heat_capacity

    def phi(self, draw_l):
        """Volume fraction of the tank replaced by a draw."""
        return np.asarray(draw_l, dtype=float) / self.volume


class Scenario(str, enum.Enum):
    I = "I"  # noqa: E741
    II = "II"
    III = "III"

    @property
    def has_pv(self) -> bool:
        return self is not Scenario.I

    @property
    def has_battery(self) -> bool:
        return self is Scenario.III


@dataclass(frozen=True)
class CustomerRecord:
    id: str
    scenario: Scenario
    tariff: TariffSchedule
    ewh: EwhParams
    battery: BatteryParams | None = None
    pv_size: float | None = None
    inverter_eta: float = 1.0
    grid_limit: float = DEFAULT_GRID_LIMIT_KW

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        if self.scenario.has_pv and not self.pv_size:
            raise ValueError(f"scenario {self.scenario.value} requires a PV size")
        if self.scenario.has_battery and self.battery is None:
            raise ValueError("scenario III requires a battery")
        if not 0 < self.inverter_eta <= 1:
            raise ValueError("inverter efficiency must lie in (0, 1]")
        if self.grid_limit <= 0:
            raise ValueError("grid limit must be positive")


def _frozen_array(a, name) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    if arr.ndim == 1:
        arr = arr.reshape(-1, SLOTS_PER_DAY)
    if arr.ndim != 2 or arr.shape[1] != SLOTS_PER_DAY:
        raise ValueError(f"{name} must have shape (days, {SLOTS_PER_DAY})")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError(f"{name} must be finite and non-negative")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class CustomerTraces:
    """Half-hourly base demand (kW), PV output (kW) and hot-water draws (L).

    Arrays are ``(days, 48)`` and cover consecutive days starting at
    ``first_day``; a full year has 365 rows.
    """

    base_demand: np.ndarray
    pv: np.ndarray
    hw_draw: np.ndarray
    first_day: int = 1
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        base = _frozen_array(self.base_demand, "base_demand")
        pv = _frozen_array(self.pv, "pv")
        hw = _frozen_array(self.hw_draw, "hw_draw")
        if not base.shape == pv.shape == hw.shape:
            raise ValueError("trace arrays must share one shape")
        if self.first_day < 1 or self.first_day + base.shape[0] - 1 > DAYS_PER_YEAR:
            raise ValueError("traces must stay inside one calendar year")
        object.__setattr__(self, "base_demand", base)
        object.__setattr__(self, "pv", pv)
        object.__setattr__(self, "hw_draw", hw)

    @property
    def n_days(self) -> int:
        return self.base_demand.shape[0]

    @property
    def days(self) -> np.ndarray:
        return np.arange(self.first_day, self.first_day + self.n_days)

    @property
    def is_full_year(self) -> bool:
        return self.first_day == 1 and self.n_days == DAYS_PER_YEAR

    def window(self, start: int, stop: int) -> "CustomerTraces":
        """Rows ``start:stop`` (0-based, relative to ``first_day``)."""
        return CustomerTraces(self.base_demand[start:stop], self.pv[start:stop],
                              self.hw_draw[start:stop], self.first_day + start)

    def without_pv(self) -> "CustomerTraces":
        return CustomerTraces(self.base_demand, np.zeros_like(self.pv), self.hw_draw,
                              self.first_day)
