"""Electricity bills from half-hourly import/export series."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import (DT_H, SLOTS_PER_DAY, PeakVariant, TariffSchedule, month_of_day)


@dataclass
class BillBreakdown:
    fixed: float
    energy: float
    export_credit: float
    demand: float
    monthly: dict[int, "BillBreakdown"] = field(default_factory=dict, repr=False)

    @property
    def total(self) -> float:
        return self.fixed + self.energy - self.export_credit + self.demand

    def as_row(self) -> dict[str, float]:
        return {"fixed": self.fixed, "energy": self.energy, "export_credit": self.export_credit,
                "demand": self.demand, "total": self.total}


def _as_days(series, name) -> np.ndarray:
    a = np.asarray(series, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, SLOTS_PER_DAY)
    if a.ndim != 2 or a.shape[1] != SLOTS_PER_DAY:
        raise ValueError(f"{name} must be shaped (days, {SLOTS_PER_DAY})")
    return a


def _month_index(n_days: int, first_day: int) -> np.ndarray:
    return month_of_day(np.arange(first_day, first_day + n_days))


def monthly_peaks(import_series, variant: PeakVariant | str = PeakVariant.MONTHLY_MAX,
                  first_day: int = 1) -> dict[int, float]:
    """Billable peak demand (kW) of each month covered by ``import_series``.

    ``TopFourDailyAvg`` averages the four largest daily maxima of the month, or
    all of them when fewer than four days are present.
    """
    imp = _as_days(import_series, "import_series")
    if imp.shape[0] == 0:
        raise ValueError("empty import series")
    variant = PeakVariant(variant)
    months = _month_index(imp.shape[0], first_day)
    daily_max = imp.max(axis=1)
    out = {}
    for m in np.unique(months):
        dm = daily_max[months == m]
        if variant is PeakVariant.MONTHLY_MAX:
            out[int(m)] = float(dm.max())
        else:
            out[int(m)] = float(np.sort(dm)[::-1][:4].mean())
    return out


def annual_cost(tariff: TariffSchedule, import_series, export_series=None,
                first_day: int = 1) -> BillBreakdown:
    """Bill for the covered days: fixed + energy - feed-in credit + demand charges.

    A full year is 365 rows; shorter series are billed for the days present.
    """
    imp = _as_days(import_series, "import_series")
    exp = np.zeros_like(imp) if export_series is None else _as_days(export_series,
                                                                    "export_series")
    if imp.shape != exp.shape:
        raise ValueError("import and export series must share one shape")
    if np.any(imp < 0) or np.any(exp < 0):
        raise ValueError("import and export powers must be non-negative")
    if imp.shape[0] == 0:
        raise ValueError("empty import series")
    prices = tariff.slot_prices()
    months = _month_index(imp.shape[0], first_day)
    peaks = (monthly_peaks(imp, tariff.peak_variant, first_day)
             if tariff.kind.has_demand_charge else {})
    monthly = {}
    for m in np.unique(months):
        sel = months == m
        mi, me = imp[sel], exp[sel]
        monthly[int(m)] = BillBreakdown(
            fixed=float(sel.sum() * tariff.fixed_daily),
            energy=float((mi * prices).sum() * DT_H),
            export_credit=float(me.sum() * tariff.fit * DT_H),
            demand=float(tariff.peak_charge * peaks.get(int(m), 0.0)),
        )
    total = BillBreakdown(
        fixed=sum(b.fixed for b in monthly.values()),
        energy=sum(b.energy for b in monthly.values()),
        export_credit=sum(b.export_credit for b in monthly.values()),
        demand=sum(b.demand for b in monthly.values()),
        monthly=monthly,
    )
    return total


BILL_FIELDS = ["customer_id", "tariff", "month", "fixed", "energy", "export_credit", "demand",
               "total"]


def bill_rows(customer_id: str, tariff_label: str, bill: BillBreakdown) -> list[dict]:
    rows = []
    for m, b in sorted(bill.monthly.items()):
        rows.append({"customer_id": customer_id, "tariff": tariff_label, "month": m,
                     **b.as_row()})
    rows.append({"customer_id": customer_id, "tariff": tariff_label, "month": "year",
                 **bill.as_row()})
    return rows


def write_bills_csv(rows: list[dict], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=BILL_FIELDS, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.items()})
    return path
