"""Independent recomputations used as test oracles."""

import numpy as np

from dertariff.hems import step_battery_soc, step_ewh_temp


def replay_soc(schedule, battery) -> np.ndarray:
    """SOC at the end of every slot, stepped forward from the initial charge."""
    ch = schedule.batt_charge.ravel()
    dis = schedule.batt_discharge.ravel()
    out = np.empty(ch.size)
    e = battery.soc_initial
    for k in range(ch.size):
        e = step_battery_soc(e, ch[k], dis[k], battery)
        out[k] = e
    return out.reshape(schedule.soc.shape)


def replay_temp(schedule, ewh, draws) -> np.ndarray:
    p = schedule.ewh_power.ravel()
    w = np.asarray(draws, float).ravel()
    out = np.empty(p.size)
    t = ewh.t_initial
    for k in range(p.size):
        t = step_ewh_temp(t, p[k], w[k], ewh)
        out[k] = t
    return out.reshape(schedule.ewh_temp.shape)


def balance_residual(schedule, traces) -> float:
    lhs = schedule.grid_import - schedule.grid_export
    rhs = (traces.base_demand + schedule.ewh_power + schedule.batt_charge
           - schedule.batt_discharge - traces.pv)
    return float(np.abs(lhs - rhs).max())


def complementarity(schedule) -> float:
    return float(max((schedule.grid_import * schedule.grid_export).max(),
                     (schedule.batt_charge * schedule.batt_discharge).max()))


def monthly_max(series, first_day) -> dict[int, float]:
    """Month -> max, computed from calendar arithmetic without the library helpers."""
    ends = np.cumsum([31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31])
    out: dict[int, float] = {}
    for k, row in enumerate(np.asarray(series)):
        day = first_day + k
        m = int(np.argmax(day <= ends)) + 1
        out[m] = max(out.get(m, -np.inf), float(row.max()))
    return out
