"""CSV readers and writers for traces and schedules."""

from __future__ import annotations

import csv
import hashlib
from pathlib import Path

import numpy as np

from .domain import SLOTS_PER_DAY

TRACE_FIELDS = ["customer_id", "day", "slot", "demand_kw", "pv_kw", "hw_draw_l"]
SCHEDULE_FIELDS = ["customer_id", "day", "slot", "grid_import_kw", "grid_export_kw",
                   "batt_charge_kw", "batt_discharge_kw", "soc_kwh", "ewh_kw", "ewh_temp_c"]
_SCHEDULE_ATTRS = ["grid_import", "grid_export", "batt_charge", "batt_discharge", "soc",
                   "ewh_power", "ewh_temp"]


class DataError(ValueError):
    """Malformed input data."""


def sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_traces_csv(path, ids: list[str], demand, pv, hw, first_day: int = 1) -> Path:
    """Arrays are (customers, days, 48)."""
    path = Path(path)
    demand, pv, hw = (np.asarray(a, float) for a in (demand, pv, hw))
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_FIELDS)
        for i, cid in enumerate(ids):
            for d in range(demand.shape[1]):
                for s in range(SLOTS_PER_DAY):
                    w.writerow([cid, first_day + d, s + 1, f"{demand[i, d, s]:.6f}",
                                f"{pv[i, d, s]:.6f}", f"{hw[i, d, s]:.6f}"])
    return path


def read_traces_csv(path):
    """Return (ids, demand, pv, hw, first_day) with arrays shaped (customers, days, 48)."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or any(f not in reader.fieldnames for f in TRACE_FIELDS):
                raise DataError(f"{path}: header must contain {', '.join(TRACE_FIELDS)}")
            rows = list(reader)
    except OSError as exc:
        raise DataError(str(exc)) from exc
    if not rows:
        raise DataError(f"{path}: no data rows")
    ids = sorted({r["customer_id"] for r in rows})
    try:
        days = np.array([int(r["day"]) for r in rows])
        slots = np.array([int(r["slot"]) for r in rows])
        vals = np.array([[float(r["demand_kw"]), float(r["pv_kw"]), float(r["hw_draw_l"])]
                         for r in rows])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    if slots.min() < 1 or slots.max() > SLOTS_PER_DAY:
        raise DataError(f"{path}: slot numbers must be 1..{SLOTS_PER_DAY}")
    first, last = int(days.min()), int(days.max())
    n_days = last - first + 1
    idx = {c: i for i, c in enumerate(ids)}
    out = np.full((3, len(ids), n_days, SLOTS_PER_DAY), np.nan)
    ci = np.array([idx[r["customer_id"]] for r in rows])
    out[:, ci, days - first, slots - 1] = vals.T
    if np.isnan(out).any():
        raise DataError(f"{path}: every customer needs every slot of days {first}..{last}")
    return ids, out[0], out[1], out[2], first


def write_schedules_csv(path, schedules) -> Path:
    """``schedules`` is an iterable of :class:`~dertariff.hems.Schedule`."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCHEDULE_FIELDS)
        for sch in schedules:
            arrs = [getattr(sch, a) for a in _SCHEDULE_ATTRS]
            for d in range(sch.n_days):
                for s in range(SLOTS_PER_DAY):
                    w.writerow([sch.customer_id, sch.first_day + d, s + 1,
                                *(f"{a[d, s]:.6f}" for a in arrs)])
    return path


def read_schedule_columns(path) -> dict[str, dict[str, np.ndarray]]:
    """customer_id -> column -> (days, 48) array."""
    by: dict[str, list[dict]] = {}
    with Path(path).open(newline="") as fh:
        for r in csv.DictReader(fh):
            by.setdefault(r["customer_id"], []).append(r)
    out = {}
    for cid, rows in by.items():
        first = min(int(r["day"]) for r in rows)
        n = max(int(r["day"]) for r in rows) - first + 1
        cols = {f: np.zeros((n, SLOTS_PER_DAY)) for f in SCHEDULE_FIELDS[3:]}
        for r in rows:
            d, s = int(r["day"]) - first, int(r["slot"]) - 1
            for f in cols:
                cols[f][d, s] = float(r[f])
        out[cid] = cols
    return out
