"""Household energy management: MILP scheduling of battery, water heater and grid exchange.

The model for one window of ``n`` half-hour slots uses, per slot, grid import
and export with a direction binary, battery charge/discharge power with a
mode binary and state of charge, water-heater duty and tank temperature.
Demand tariffs add one peak variable bounding every import.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .domain import (DT_H, SLOTS_PER_DAY, BatteryParams, CustomerRecord, CustomerTraces,
                     EwhParams, month_of_day)
from .solver import (EQ, LE, LpProblem, MilpLimits, MilpProblem, MilpSolution, Status,
                     solve_milp)


class Horizon(str, enum.Enum):
    DAILY = "Daily"
    MONTHLY = "Monthly"


class HemsError(RuntimeError):
    """A scheduling window could not be solved."""

    def __init__(self, message, window_start_day=None, status=None, diagnostic_day=None):
        super().__init__(message)
        self.window_start_day = window_start_day
        self.status = status
        self.diagnostic_day = diagnostic_day


def step_battery_soc(e_prev: float, p_ch: float, p_dis: float, b: BatteryParams) -> float:
    """State of charge after one slot of charging at ``p_ch`` and discharging at ``p_dis``."""
    if p_ch < 0 or p_dis < 0:
        raise ValueError("battery powers must be non-negative")
    return e_prev + DT_H * (b.eta_charge * p_ch - p_dis / b.eta_discharge)


def step_ewh_temp(t_prev: float, p: float, draw: float, w: EwhParams) -> float:
    """Tank temperature after one slot with element power ``p`` (kW) and a draw of ``draw`` L."""
    if p < 0 or draw < 0:
        raise ValueError("heater power and draw must be non-negative")
    if draw > w.volume:
        raise ValueError(f"draw of {draw} L exceeds the {w.volume} L tank")
    phi = draw / w.volume
    return (t_prev + w.psi * p + w.lam * (w.t_ambient - t_prev)
            + phi * (w.t_inlet - t_prev))


@dataclass(frozen=True)
class HemsInstance:
    customer: CustomerRecord
    traces: CustomerTraces
    horizon: Horizon = Horizon.MONTHLY
    peak_coupling: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "horizon", Horizon(self.horizon))
        peak_base = float(self.traces.base_demand.max(initial=0.0))
        if peak_base > self.customer.grid_limit:
            raise ValueError(
                f"customer {self.customer.id}: base demand {peak_base:.2f} kW exceeds the "
                f"grid limit {self.customer.grid_limit:.2f} kW")
        if self.peak_coupling < 0:
            raise ValueError("peak coupling must be non-negative")
        if np.any(self.traces.hw_draw > self.customer.ewh.volume):
            raise ValueError("a single-slot draw exceeds the tank volume")


@dataclass
class VariableMap:
    """Column indices of each decision series in a built problem."""

    n_slots: int
    grid_import: np.ndarray
    ewh_duty: np.ndarray
    ewh_temp: np.ndarray
    grid_export: np.ndarray | None = None
    grid_dir: np.ndarray | None = None
    batt_charge: np.ndarray | None = None
    batt_discharge: np.ndarray | None = None
    soc: np.ndarray | None = None
    batt_mode: np.ndarray | None = None
    peak: int | None = None


class _Builder:
    def __init__(self):
        self.lo, self.hi, self.cost, self.names = [], [], [], []
        self.rows, self.cols, self.vals = [], [], []
        self.senses, self.rhs = [], []
        self.n = 0
        self.m = 0

    def var(self, name, count, lo, hi, cost=0.0):
        idx = np.arange(self.n, self.n + count)
        self.n += count
        self.lo.append(np.broadcast_to(np.asarray(lo, float), (count,)))
        self.hi.append(np.broadcast_to(np.asarray(hi, float), (count,)))
        self.cost.append(np.broadcast_to(np.asarray(cost, float), (count,)))
        self.names += [f"{name}[{i}]" for i in range(count)]
        return idx

    def rows_block(self, terms, sense, rhs):
        """Add ``k`` rows; ``terms`` is a list of (column indices, coefficients) of length k each."""
        rhs = np.atleast_1d(np.asarray(rhs, float))
        k = rhs.size
        r = np.arange(self.m, self.m + k)
        for cols, coef in terms:
            cols = np.broadcast_to(np.asarray(cols), (k,))
            coef = np.broadcast_to(np.asarray(coef, float), (k,))
            keep = coef != 0
            self.rows.append(r[keep])
            self.cols.append(cols[keep])
            self.vals.append(coef[keep])
        self.senses += [sense] * k
        self.rhs.append(rhs)
        self.m += k

    def problem(self, offset=0.0):
        A = sp.csr_matrix((np.concatenate(self.vals), (np.concatenate(self.rows),
                                                        np.concatenate(self.cols))),
                          shape=(self.m, self.n))
        A.sum_duplicates()
        return LpProblem(np.concatenate(self.cost), A, np.array(self.senses),
                         np.concatenate(self.rhs), np.concatenate(self.lo),
                         np.concatenate(self.hi), offset=offset, names=self.names)


def build_hems_problem(inst: HemsInstance) -> tuple[MilpProblem, VariableMap]:
    """Assemble the window MILP for ``inst``.

    Objective: half-hourly energy cost of imports minus feed-in credit, plus
    for demand tariffs the charge on any rise of the peak variable above
    ``peak_coupling`` (the month-to-date peak carried in from earlier
    windows).
    """
    c = inst.customer
    tr = inst.traces
    tariff = c.tariff
    scen = c.scenario
    n = tr.n_days * SLOTS_PER_DAY
    base = tr.base_demand.ravel()
    pv = tr.pv.ravel() if scen.has_pv else np.zeros(n)
    draw = tr.hw_draw.ravel()
    price = np.tile(tariff.slot_prices(), tr.n_days)
    eta_i = c.inverter_eta
    w = c.ewh
    pg = c.grid_limit

    bld = _Builder()
    gp = bld.var("grid_import", n, 0.0, pg, DT_H * price)
    gm = dg = None
    if scen.has_pv:
        gm = bld.var("grid_export", n, 0.0, pg, -DT_H * tariff.fit)
        dg = bld.var("grid_dir", n, 0.0, 1.0)
    bp = bm = e = sb = None
    if scen.has_battery:
        bat = c.battery
        bp = bld.var("batt_charge", n, 0.0, bat.p_charge_max)
        bm = bld.var("batt_discharge", n, 0.0, bat.p_discharge_max)
        e = bld.var("soc", n, bat.soc_min, bat.capacity)
        sb = bld.var("batt_mode", n, 0.0, 1.0)
    u = bld.var("ewh_duty", n, 0.0, 1.0)
    T = bld.var("ewh_temp", n, w.t_min, w.t_max)
    peak = None
    offset = 0.0
    if tariff.kind.has_demand_charge:
        peak = int(bld.var("peak", 1, inst.peak_coupling, np.inf, tariff.peak_charge)[0])
        offset = -tariff.peak_charge * inst.peak_coupling

    ewh_kw = w.eta_thermal * w.element_rating
    # energy balance
    terms = [(gp, 1.0), (u, -ewh_kw)]
    if gm is not None:
        terms.append((gm, -1.0))
    if bp is not None:
        terms += [(bp, -eta_i), (bm, eta_i)]
    bld.rows_block(terms, EQ, base - eta_i * pv)

    if scen.has_battery:
        bat = c.battery
        prev = np.concatenate([[0], e[:-1]])
        prev_coef = np.concatenate([[0.0], -np.ones(n - 1)])
        rhs = np.zeros(n)
        rhs[0] = bat.soc_initial
        bld.rows_block([(e, 1.0), (prev, prev_coef), (bp, -DT_H * bat.eta_charge),
                        (bm, DT_H / bat.eta_discharge)], EQ, rhs)
        bld.rows_block([(bp, 1.0), (sb, -bat.p_charge_max)], LE, np.zeros(n))
        bld.rows_block([(bm, 1.0), (sb, bat.p_discharge_max)], LE,
                       np.full(n, bat.p_discharge_max))

    phi = w.phi(draw)
    keep = 1.0 - w.lam - phi
    drive = w.lam * w.t_ambient + phi * w.t_inlet
    prev = np.concatenate([[0], T[:-1]])
    prev_coef = np.concatenate([[0.0], -keep[1:]])
    rhs = drive.copy()
    rhs[0] += keep[0] * w.t_initial
    bld.rows_block([(T, 1.0), (prev, prev_coef), (u, -w.psi * ewh_kw)], EQ, rhs)

    if scen.has_pv:
        bld.rows_block([(gp, 1.0), (dg, -pg)], LE, np.zeros(n))
        bld.rows_block([(gm, 1.0), (dg, pg)], LE, np.full(n, pg))

    if peak is not None:
        bld.rows_block([(gp, 1.0), (np.full(n, peak), -1.0)], LE, np.zeros(n))

    lp = bld.problem(offset)
    binaries = np.concatenate([x for x in (dg, sb) if x is not None]) if (
        dg is not None or sb is not None) else np.zeros(0, dtype=int)
    vmap = VariableMap(n, gp, u, T, gm, dg, bp, bm, e, sb, peak)
    return MilpProblem(lp, binaries), vmap


@dataclass
class WindowStats:
    first_day: int
    n_days: int
    status: str
    objective: float
    gap: float
    nodes_explored: int
    lp_iterations: int
    seconds: float
    peak_coupling: float = 0.0

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class Schedule:
    """Optimised half-hourly operation, arrays shaped ``(days, 48)``."""

    customer_id: str
    first_day: int
    grid_import: np.ndarray
    grid_export: np.ndarray
    batt_charge: np.ndarray
    batt_discharge: np.ndarray
    soc: np.ndarray
    ewh_power: np.ndarray
    ewh_temp: np.ndarray
    ewh_duty: np.ndarray
    total_demand: np.ndarray
    peak_var: dict[int, float] = field(default_factory=dict)
    windows: list[WindowStats] = field(default_factory=list)

    @property
    def n_days(self) -> int:
        return self.grid_import.shape[0]

    @property
    def days(self) -> np.ndarray:
        return np.arange(self.first_day, self.first_day + self.n_days)

    @property
    def net_import(self) -> np.ndarray:
        """p^g = import - export, kW."""
        return self.grid_import - self.grid_export

    @property
    def objective_total(self) -> float:
        return float(sum(w.objective for w in self.windows))

    @staticmethod
    def concatenate(parts: list["Schedule"]) -> "Schedule":
        first = parts[0]
        cat = {k: np.concatenate([getattr(p, k) for p in parts])
               for k in ("grid_import", "grid_export", "batt_charge", "batt_discharge", "soc",
                         "ewh_power", "ewh_temp", "ewh_duty", "total_demand")}
        peaks: dict[int, float] = {}
        windows = []
        for p in parts:
            peaks.update(p.peak_var)
            windows += p.windows
        return Schedule(first.customer_id, first.first_day, peak_var=peaks, windows=windows,
                        **cat)


def _extract(inst: HemsInstance, vmap: VariableMap, x: np.ndarray) -> Schedule:
    tr = inst.traces
    c = inst.customer
    shape = (tr.n_days, SLOTS_PER_DAY)
    zeros = np.zeros(shape)

    def get(idx):
        return zeros.copy() if idx is None else np.clip(x[idx], 0.0, None).reshape(shape)

    duty = np.clip(x[vmap.ewh_duty], 0.0, 1.0).reshape(shape)
    ewh_power = c.ewh.eta_thermal * c.ewh.element_rating * duty
    soc = get(vmap.soc) if vmap.soc is not None else zeros.copy()
    peaks = {}
    if vmap.peak is not None:
        peaks[int(month_of_day(tr.days[-1]))] = float(x[vmap.peak])
    return Schedule(
        customer_id=c.id, first_day=tr.first_day,
        grid_import=get(vmap.grid_import), grid_export=get(vmap.grid_export),
        batt_charge=get(vmap.batt_charge), batt_discharge=get(vmap.batt_discharge),
        soc=soc, ewh_power=ewh_power, ewh_temp=x[vmap.ewh_temp].reshape(shape),
        ewh_duty=duty, total_demand=tr.base_demand + ewh_power, peak_var=peaks)


def thermal_diagnostic(customer: CustomerRecord, traces: CustomerTraces) -> int | None:
    """First day on which the tank falls below ``t_min`` even with the element always on."""
    w = customer.ewh
    temp = w.t_initial
    full = w.eta_thermal * w.element_rating
    for d, row in zip(traces.days, traces.hw_draw):
        for draw in row:
            temp = min(step_ewh_temp(temp, full, float(draw), w), w.t_max)
            if temp < w.t_min - 1e-9:
                return int(d)
    return None


def solve_window(inst: HemsInstance, limits: MilpLimits | None = None,
                 lp_method: str = "auto") -> tuple[Schedule, MilpSolution]:
    """Build and solve one window; raise :class:`HemsError` when no schedule is found."""
    t0 = time.perf_counter()
    prob, vmap = build_hems_problem(inst)
    sol = solve_milp(prob, limits, lp_method)
    elapsed = time.perf_counter() - t0
    first = inst.traces.first_day
    if sol.values is None:
        diag = None
        msg = f"window starting day {first}: solver status {sol.status.value}"
        if sol.status is Status.INFEASIBLE:
            diag = thermal_diagnostic(inst.customer, inst.traces)
            if diag is not None:
                msg += f"; tank cannot stay above t_min from day {diag}"
        raise HemsError(msg, first, sol.status, diag)
    sched = _extract(inst, vmap, sol.values)
    sched.windows.append(WindowStats(first, inst.traces.n_days, sol.status.value,
                                     sol.objective, sol.gap, sol.nodes_explored,
                                     sol.lp_iterations, elapsed, inst.peak_coupling))
    return sched, sol


def _windows(traces: CustomerTraces, horizon: Horizon) -> list[tuple[int, int]]:
    if horizon is Horizon.DAILY:
        return [(i, i + 1) for i in range(traces.n_days)]
    months = month_of_day(traces.days)
    out = []
    start = 0
    for i in range(1, traces.n_days + 1):
        if i == traces.n_days or months[i] != months[start]:
            out.append((start, i))
            start = i
    return out


def with_initial_state(customer: CustomerRecord, soc: float | None, temp: float) -> CustomerRecord:
    w = customer.ewh
    ewh = replace(w, t_initial=float(np.clip(temp, w.t_min, w.t_max)))
    bat = customer.battery
    if bat is not None and soc is not None:
        bat = replace(bat, soc_initial=float(np.clip(soc, bat.soc_min, bat.capacity)))
    return replace(customer, ewh=ewh, battery=bat)


def run_rolling_horizon(inst: HemsInstance, limits: MilpLimits | None = None,
                        lp_method: str = "auto") -> Schedule:
    """Solve consecutive tiled windows, threading SOC, tank temperature and the month-to-date peak."""
    customer = inst.customer
    traces = inst.traces
    soc = customer.battery.soc_initial if customer.battery is not None else None
    temp = customer.ewh.t_initial
    coupling = 0.0
    month = None
    parts = []
    for start, stop in _windows(traces, inst.horizon):
        wtr = traces.window(start, stop)
        m = month_of_day(wtr.first_day)
        if m != month:
            coupling = 0.0
            month = m
        winst = HemsInstance(with_initial_state(customer, soc, temp), wtr, inst.horizon,
                             coupling)
        sched, sol = solve_window(winst, limits, lp_method)
        parts.append(sched)
        temp = float(sched.ewh_temp[-1, -1])
        if customer.scenario.has_battery:
            soc = float(sched.soc[-1, -1])
        if customer.tariff.kind.has_demand_charge:
            coupling = max(coupling, float(sched.peak_var.get(m, 0.0)))
    return Schedule.concatenate(parts)
