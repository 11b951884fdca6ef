"""Monte Carlo penetration study.

For every (PV level, battery level) pair the customer base is split into
Scenario I/II/III households, households are shuffled across load points,
and a year (or shorter horizon) of power flow is run on the resulting net
injections. Each run draws its randomness from its own seed so runs can be
executed in any order, or in parallel, with identical results.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import SLOTS_PER_DAY, Scenario
from .powerflow import Network, detect_voltage_problems, run_timeseries

DEFAULT_PV_LEVELS = (0, 25, 50, 75)
DEFAULT_BATT_LEVELS = (0, 40, 80)
RESULT_FIELDS = ["p", "b", "run", "max_head_loading_pct", "customers_with_voltage_problems_pct"]


class StudyError(RuntimeError):
    pass


def _quotas(n: int, p: float, b: float) -> tuple[int, int, int]:
    """Largest-remainder split of ``n`` into Scenario I/II/III counts."""
    exact = np.array([n * (100 - p) / 100, n * p / 100 * (100 - b) / 100, n * p / 100 * b / 100])
    base = np.floor(exact + 1e-9).astype(int)
    rem = exact - base
    short = n - int(base.sum())
    # ties resolved in scenario order; stable sort keeps it deterministic
    for k in np.argsort(-rem, kind="stable")[:short]:
        base[k] += 1
    return int(base[0]), int(base[1]), int(base[2])


def allocate_scenarios(customers, p: float, b: float, rng_seed) -> list[Scenario]:
    """Scenario per customer, in the order of ``customers``."""
    if not (0 <= p <= 100 and 0 <= b <= 100):
        raise ValueError("penetration levels must lie in [0, 100]")
    n = len(customers)
    n1, n2, n3 = _quotas(n, p, b)
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    order = rng.permutation(n)
    out = [Scenario.I] * n
    for i in order[n1:n1 + n2]:
        out[i] = Scenario.II
    for i in order[n1 + n2:]:
        out[i] = Scenario.III
    return out


class ScheduleStore:
    """Net grid import ``p^g`` (kW, export negative) per customer and scenario.

    Series are (days, 48) and must cover the same days for every entry.
    """

    def __init__(self, series: dict[str, dict[Scenario, np.ndarray]] | None = None):
        self.series: dict[str, dict[Scenario, np.ndarray]] = {}
        for cid, per in (series or {}).items():
            for sc, arr in per.items():
                self.add(cid, sc, arr)

    def add(self, customer_id: str, scenario, net_import) -> None:
        arr = np.asarray(net_import, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, SLOTS_PER_DAY)
        if arr.ndim != 2 or arr.shape[1] != SLOTS_PER_DAY:
            raise ValueError("schedules must be (days, 48)")
        for other in self.series.values():
            for s in other.values():
                if s.shape != arr.shape:
                    raise ValueError("all stored schedules must cover the same days")
        self.series.setdefault(customer_id, {})[Scenario(scenario)] = arr

    @classmethod
    def from_schedules(cls, schedules) -> "ScheduleStore":
        """Build from ``{(customer_id, scenario): Schedule}``."""
        store = cls()
        for (cid, sc), sched in sorted(schedules.items(), key=lambda kv: (kv[0][0], kv[0][1])):
            store.add(cid, sc, sched.net_import)
        return store

    @property
    def customer_ids(self) -> list[str]:
        return sorted(self.series)

    @property
    def n_days(self) -> int:
        for per in self.series.values():
            for s in per.values():
                return s.shape[0]
        return 0

    def get(self, customer_id: str, scenario: Scenario) -> np.ndarray:
        return self.series[customer_id][scenario]

    def missing(self, customers: list[str], needed: set[Scenario]) -> list[tuple[str, str]]:
        return [(c, s.value) for c in customers for s in sorted(needed, key=lambda s: s.value)
                if s not in self.series.get(c, {})]

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["customer_id", "scenario", "day", "slot", "net_import_kw"])
            for cid in self.customer_ids:
                for sc in sorted(self.series[cid], key=lambda s: s.value):
                    arr = self.series[cid][sc]
                    for d in range(arr.shape[0]):
                        for s in range(SLOTS_PER_DAY):
                            w.writerow([cid, sc.value, d + 1, s + 1, f"{arr[d, s]:.6f}"])
        return path

    @classmethod
    def read_csv(cls, path) -> "ScheduleStore":
        rows: dict[tuple[str, str], dict[tuple[int, int], float]] = {}
        with Path(path).open(newline="") as fh:
            for r in csv.DictReader(fh):
                rows.setdefault((r["customer_id"], r["scenario"]), {})[
                    (int(r["day"]), int(r["slot"]))] = float(r["net_import_kw"])
        store = cls()
        for (cid, sc), vals in sorted(rows.items()):
            days = max(d for d, _ in vals)
            arr = np.zeros((days, SLOTS_PER_DAY))
            for (d, s), v in vals.items():
                arr[d - 1, s - 1] = v
            store.add(cid, sc, arr)
        return store


@dataclass
class StudyConfig:
    network: Network
    store: ScheduleStore
    pv_levels: tuple = DEFAULT_PV_LEVELS
    batt_levels: tuple = DEFAULT_BATT_LEVELS
    runs: int = 100
    master_seed: int = 0
    tariff: str = ""
    v_band: tuple[float, float] = (0.95, 1.05)
    day_fraction: float = 0.05
    threads: int = 1

    def __post_init__(self):
        levels = list(self.pv_levels) + list(self.batt_levels)
        if any(not 0 <= v <= 100 for v in levels):
            raise ValueError("penetration levels must lie in [0, 100]")
        if self.runs < 1:
            raise ValueError("runs must be at least 1")

    def combos(self) -> list[tuple[int, int]]:
        """(p, b) pairs; battery levels are only swept when some PV is present."""
        out = []
        for p in self.pv_levels:
            if p == 0:
                out.append((p, 0))
            else:
                out.extend((p, b) for b in self.batt_levels)
        return out

    def needed_scenarios(self) -> set[Scenario]:
        need = {Scenario.I} if any(p < 100 for p in self.pv_levels) else set()
        for p, b in self.combos():
            if p > 0 and b < 100:
                need.add(Scenario.II)
            if p > 0 and b > 0:
                need.add(Scenario.III)
        return need


def run_seed(master: int, p: int, b: int, run: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master), int(p), int(b), int(run)])


@dataclass
class RunResult:
    p: int
    b: int
    run: int
    max_head_loading_pct: float
    customers_with_voltage_problems_pct: float
    flagged: list[str]
    allocation: dict[str, str]
    placement: list[str]
    nonconverged_slots: int

    def row(self) -> dict:
        return {k: getattr(self, k) for k in RESULT_FIELDS}


@dataclass
class StudyResults:
    tariff: str
    rows: list[RunResult] = field(default_factory=list)

    def summaries(self) -> dict[str, dict]:
        out = {}
        keys = sorted({(r.p, r.b) for r in self.rows})
        for p, b in keys:
            sel = [r for r in self.rows if (r.p, r.b) == (p, b)]
            out[f"p{p}_b{b}"] = {
                "p": p, "b": b, "runs": len(sel),
                "max_head_loading_pct": summarize([r.max_head_loading_pct for r in sel]),
                "customers_with_voltage_problems_pct":
                    summarize([r.customers_with_voltage_problems_pct for r in sel]),
            }
        return out

    def values(self, p: int, b: int, metric: str = "max_head_loading_pct") -> np.ndarray:
        return np.array([getattr(r, metric) for r in self.rows if (r.p, r.b) == (p, b)])

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RESULT_FIELDS)
            for r in self.rows:
                w.writerow([r.p, r.b, r.run, f"{r.max_head_loading_pct:.6f}",
                            f"{r.customers_with_voltage_problems_pct:.6f}"])
        return path

    def write_summary(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps({"tariff": self.tariff, "combos": self.summaries()},
                                   indent=1, sort_keys=True))
        return path

    def write_details(self, path) -> Path:
        path = Path(path)
        doc = [{"p": r.p, "b": r.b, "run": r.run, "flagged": r.flagged,
                "allocation": r.allocation, "placement": r.placement,
                "nonconverged_slots": r.nonconverged_slots} for r in self.rows]
        path.write_text(json.dumps(doc, indent=1))
        return path


def summarize(values) -> dict[str, float]:
    v = np.asarray(values, dtype=float)
    q = np.percentile(v, [0, 25, 50, 75, 100])
    return {"min": float(q[0]), "q1": float(q[1]), "median": float(q[2]), "q3": float(q[3]),
            "max": float(q[4])}


def _one_run(cfg: StudyConfig, customers: list[str], p: int, b: int, run: int) -> RunResult:
    rng = np.random.default_rng(run_seed(cfg.master_seed, p, b, run))
    scen = allocate_scenarios(customers, p, b, rng)
    placement = [customers[i] for i in rng.permutation(len(customers))]
    by_id = dict(zip(customers, scen))
    inj = np.stack([cfg.store.get(c, by_id[c]).reshape(-1) for c in placement], axis=1)
    net = cfg.network
    res = run_timeseries(net, inj)
    lo, hi = cfg.v_band
    vr = detect_voltage_problems(res.v_pu, lo, hi, cfg.day_fraction)
    ok = np.isfinite(res.head_current)
    loading = 100.0 * float(res.head_current[ok].max()) / net.head_rating_a if ok.any() else np.nan
    flagged = sorted(c for c, f in zip(placement, vr.flagged) if f)
    return RunResult(p, b, run, loading, 100.0 * len(flagged) / len(customers), flagged,
                     {c: s.value for c, s in zip(customers, scen)}, placement,
                     int((~res.converged).sum()))


def run_study(cfg: StudyConfig) -> StudyResults:
    customers = cfg.store.customer_ids
    if len(customers) != cfg.network.n_customers:
        raise StudyError(f"{len(customers)} customers for {cfg.network.n_customers} load points")
    missing = cfg.store.missing(customers, cfg.needed_scenarios())
    if missing:
        raise StudyError(f"missing schedules, first {missing[:3]}")
    jobs = [(p, b, r) for p, b in cfg.combos() for r in range(cfg.runs)]
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as ex:
            rows = list(ex.map(lambda j: _one_run(cfg, customers, *j), jobs))
    else:
        rows = [_one_run(cfg, customers, *j) for j in jobs]
    rows.sort(key=lambda r: (r.p, r.b, r.run))
    return StudyResults(cfg.tariff, rows)


def load_study_config(path) -> dict:
    """Read a study JSON document (levels, runs, seed, tariff, network path)."""
    d = json.loads(Path(path).read_text())
    for k in ("pv_levels", "batt_levels"):
        if k in d:
            d[k] = tuple(int(v) for v in d[k])
    return d
