"""Command-line pipeline: synth -> optimize -> bill -> powerflow -> study -> report."""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .billing import annual_cost, bill_rows, write_bills_csv
from .domain import CustomerTraces, Scenario, get_tariff
from .fixtures import (Equipment, History, draw_equipment, fit_models, make_customer,
                       make_feeder, make_history, sample_pool)
from .hems import HemsError, HemsInstance, Horizon, run_rolling_horizon
from .io import (DataError, read_schedule_columns, read_traces_csv, sha256,
                 write_schedules_csv, write_traces_csv)
from .montecarlo import ScheduleStore, StudyConfig, StudyError, run_study
from .powerflow import detect_voltage_problems, load_network, run_timeseries, save_network
from .report import annual_cost_table, monthly_peak_table, peak_clipping, study_distributions
from .solver import MilpLimits
from .synthesis import seasonal_to_dict

log = logging.getLogger("dertariff")

STAGES = ["synth", "optimize", "bill", "powerflow", "study", "report"]
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER, EXIT_POWERFLOW = 0, 2, 3, 4, 5

DEFAULTS = {
    "seed": 0,
    "out": "dertariff-out",
    "threads": 1,
    "history": {"path": None, "customers": 20, "days": 365},
    "pool": {"customers": 10, "days": 7, "first_day": 32},
    "tariffs": ["Flat", "ToU", "FlatD", "ToUD"],
    "scenarios": ["I", "II", "III"],
    "horizon": "Monthly",
    "solver": {"node_cap": 10000, "time_cap": None, "rel_gap": 1e-6},
    "network": None,
    "powerflow": {"tariff": None, "scenario": "I"},
    "study": {"tariffs": ["ToU", "ToUD"], "pv_levels": [0, 25, 50, 75],
              "batt_levels": [0, 40, 80], "runs": 10},
}


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, code: int, cause: Exception):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage, self.code, self.cause = stage, code, cause


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path: str | None, **overrides) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    base = Path(".")
    if path:
        p = Path(path)
        try:
            user = json.loads(p.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(user) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = _merge(cfg, user)
        base = p.parent
    for k, v in overrides.items():
        if v is not None:
            cfg[k] = v
    # relative paths in a config file are resolved next to it
    for key in ("network",):
        if cfg[key] and not Path(cfg[key]).is_absolute():
            cfg[key] = str(base / cfg[key])
    if cfg["history"].get("path") and not Path(cfg["history"]["path"]).is_absolute():
        cfg["history"]["path"] = str(base / cfg["history"]["path"])
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    try:
        seed = int(cfg["seed"])
        if seed < 0 or seed >= 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if int(cfg["threads"]) < 1:
            raise ConfigError("threads must be >= 1")
        pool = cfg["pool"]
        if int(pool["customers"]) < 1 or int(pool["days"]) < 1:
            raise ConfigError("pool needs at least one customer and one day")
        if not 1 <= int(pool["first_day"]) <= 365 - int(pool["days"]) + 1:
            raise ConfigError("pool days must stay inside one year")
        for t in cfg["tariffs"] + cfg["study"]["tariffs"]:
            get_tariff(t)
        for t in cfg["study"]["tariffs"]:
            if t not in cfg["tariffs"]:
                raise ConfigError(f"study tariff {t} is not optimised")
        for s in cfg["scenarios"]:
            Scenario(s)
        Horizon(cfg["horizon"])
        st = cfg["study"]
        if int(st["runs"]) < 1:
            raise ConfigError("study runs must be >= 1")
        for v in list(st["pv_levels"]) + list(st["batt_levels"]):
            if not 0 <= float(v) <= 100:
                raise ConfigError("penetration levels must lie in [0, 100]")
        if cfg["network"] and not Path(cfg["network"]).exists():
            raise ConfigError(f"network file {cfg['network']} not found")
        hp = cfg["history"].get("path")
        if hp and not Path(hp).exists():
            raise ConfigError(f"history file {hp} not found")
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def _seed(cfg: dict, *path: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(cfg["seed"]), *path])


def _limits(cfg: dict) -> MilpLimits:
    s = cfg["solver"]
    return MilpLimits(node_cap=int(s["node_cap"]), time_cap=s["time_cap"],
                      rel_gap=float(s["rel_gap"]))


def _tariff_key(name: str) -> str:
    return get_tariff(name).label if Path(name).suffix == ".json" else name


class Pipeline:
    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.out = Path(cfg["out"])
        self.manifest: dict = {}

    # -- helpers -----------------------------------------------------------

    def path(self, *parts) -> Path:
        p = self.out.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def _require(self, *parts) -> Path:
        p = self.out.joinpath(*parts)
        if not p.exists():
            raise DataError(f"{p} is missing; run the stage that produces it first")
        return p

    def _customers(self) -> dict[str, Equipment]:
        d = json.loads(self._require("customers.json").read_text())
        return {c["id"]: Equipment(c["pv_size"], c["battery_kwh"], c["ewh_volume"])
                for c in d["customers"]}

    def _traces(self):
        ids, dem, pv, hw, first = read_traces_csv(self._require("traces.csv"))
        return ids, dem, pv, hw, first

    def _schedule_file(self, tariff: str, scen: str) -> Path:
        return self.out / "schedules" / f"{_tariff_key(tariff)}_{scen}.csv"

    # -- stages ------------------------------------------------------------

    def synth(self) -> list[Path]:
        cfg = self.cfg
        hist_cfg, pool_cfg = cfg["history"], cfg["pool"]
        if hist_cfg.get("path"):
            _, dem, pv, hw, first = read_traces_csv(hist_cfg["path"])
            peak = pv.max(axis=(1, 2), keepdims=True)
            history = History(dem, pv / np.where(peak > 0, peak, 1.0), hw, first)
        else:
            history = make_history(int(hist_cfg["customers"]), int(hist_cfg["days"]),
                                   _seed(cfg, 1))
        models = fit_models(history)
        n, days, first = int(pool_cfg["customers"]), int(pool_cfg["days"]), int(
            pool_cfg["first_day"])
        pool = sample_pool(models, n, days, _seed(cfg, 2), first)
        equipment = draw_equipment(n, _seed(cfg, 3))
        pv = np.stack([pool.pv_per_kwp[i] * equipment[i].pv_size for i in range(n)])
        doc = {"demand": seasonal_to_dict(models.demand), "pv": seasonal_to_dict(models.pv),
               "hot_water": models.hot_water.to_dict()}
        outs = [self.path("models.json")]
        outs[0].write_text(json.dumps(doc, indent=1))
        outs.append(write_traces_csv(self.path("traces.csv"), pool.ids, pool.demand, pv,
                                     pool.hw_draw, first))
        cust = {"customers": [{"id": cid, "pv_size": e.pv_size, "battery_kwh": e.battery_kwh,
                               "ewh_volume": e.ewh_volume}
                              for cid, e in zip(pool.ids, equipment)]}
        outs.append(self.path("customers.json"))
        outs[-1].write_text(json.dumps(cust, indent=1))
        return outs

    def optimize(self) -> list[Path]:
        cfg = self.cfg
        ids, dem, pv, hw, first = self._traces()
        equipment = self._customers()
        limits = _limits(cfg)
        horizon = Horizon(cfg["horizon"])
        outs, stats = [], {}
        for tname in cfg["tariffs"]:
            tariff = get_tariff(tname)
            for scen in cfg["scenarios"]:
                sc = Scenario(scen)

                def solve(i, tariff=tariff, sc=sc):
                    cid = ids[i]
                    c = make_customer(cid, sc, tariff, equipment[cid])
                    tr = CustomerTraces(dem[i], pv[i] if sc.has_pv else np.zeros_like(pv[i]),
                                        hw[i], first)
                    return run_rolling_horizon(HemsInstance(c, tr, horizon), limits)

                threads = int(cfg["threads"])
                if threads > 1:
                    with ThreadPoolExecutor(threads) as ex:
                        scheds = list(ex.map(solve, range(len(ids))))
                else:
                    scheds = [solve(i) for i in range(len(ids))]
                key = f"{_tariff_key(tname)}_{scen}"
                outs.append(write_schedules_csv(self.path("schedules", f"{key}.csv"), scheds))
                stats[key] = {s.customer_id: {
                    "objective_total": s.objective_total,
                    "peak_var": {str(m): v for m, v in s.peak_var.items()},
                    "windows": [{k: v for k, v in w.to_dict().items() if k != "seconds"}
                                for w in s.windows]} for s in scheds}
        outs.append(self.path("solver_stats.json"))
        outs[-1].write_text(json.dumps(stats, indent=1, sort_keys=True))
        return outs

    def _load_schedules(self, tname: str, scen: str):
        return read_schedule_columns(self._require("schedules",
                                                   f"{_tariff_key(tname)}_{scen}.csv"))

    def bill(self) -> list[Path]:
        cfg = self.cfg
        _, _, _, _, first = self._traces()
        summary: dict = {}
        outs = []
        for scen in cfg["scenarios"]:
            rows = []
            for tname in cfg["tariffs"]:
                tariff = get_tariff(tname)
                cols = self._load_schedules(tname, scen)
                for cid in sorted(cols):
                    b = annual_cost(tariff, cols[cid]["grid_import_kw"],
                                    cols[cid]["grid_export_kw"], first)
                    rows += bill_rows(cid, tariff.label, b)
                    summary.setdefault(tariff.label, {}).setdefault(scen, {})[cid] = b.total
            outs.append(write_bills_csv(rows, self.path(f"bills_{scen}.csv")))
        outs.append(self.path("bills_summary.json"))
        outs[-1].write_text(json.dumps(summary, indent=1, sort_keys=True))
        return outs

    def _network(self, ids: list[str]):
        if self.cfg["network"]:
            net = load_network(self.cfg["network"])
        else:
            net = make_feeder(len(ids))
        if sorted(net.customer_ids) != sorted(ids):
            raise StudyError("network customers do not match the trace pool")
        return net

    def powerflow(self) -> list[Path]:
        cfg = self.cfg
        ids, *_, first = self._traces()
        net = self._network(ids)
        pf = cfg["powerflow"]
        tname = pf.get("tariff") or cfg["tariffs"][0]
        scen = pf.get("scenario", "I")
        cols = self._load_schedules(tname, scen)
        inj = np.stack([(cols[c]["grid_import_kw"] - cols[c]["grid_export_kw"]).reshape(-1)
                        for c in net.customer_ids], axis=1)
        res = run_timeseries(net, inj, first_day=first)
        vr = detect_voltage_problems(res.v_pu)
        key = f"{_tariff_key(tname)}_{scen}"
        outs = [save_network_path(net, self.path("network.json"))]
        outs.append(res.write_csv(self.path(f"powerflow_{key}.csv"), net.customer_ids))
        summary = {
            "tariff": tname, "scenario": scen,
            "max_head_current_a": float(np.nanmax(res.head_current)),
            "max_head_loading_pct": float(100 * np.nanmax(res.head_current) / net.head_rating_a),
            "nonconverged": res.nonconverged,
            "customers_with_voltage_problems": [c for c, f in zip(net.customer_ids, vr.flagged)
                                                if f],
        }
        outs.append(self.path(f"powerflow_{key}_summary.json"))
        outs[-1].write_text(json.dumps(summary, indent=1))
        return outs

    def study(self) -> list[Path]:
        cfg = self.cfg
        ids, *_ = self._traces()
        net = self._network(ids)
        st = cfg["study"]
        outs = [save_network_path(net, self.path("network.json"))]
        for tname in st["tariffs"]:
            store = ScheduleStore()
            for scen in ("I", "II", "III"):
                f = self._schedule_file(tname, scen)
                if not f.exists():
                    continue
                for cid, cols in read_schedule_columns(f).items():
                    store.add(cid, scen, cols["grid_import_kw"] - cols["grid_export_kw"])
            scfg = StudyConfig(net, store, tuple(st["pv_levels"]), tuple(st["batt_levels"]),
                               int(st["runs"]), int(cfg["seed"]), tname,
                               threads=int(cfg["threads"]))
            res = run_study(scfg)
            key = _tariff_key(tname)
            outs.append(res.write_csv(self.path(f"study_{key}.csv")))
            outs.append(res.write_summary(self.path(f"study_{key}_summary.json")))
            outs.append(res.write_details(self.path(f"study_{key}_details.json")))
        return outs

    def report(self) -> list[Path]:
        cfg = self.cfg
        _, _, _, _, first = self._traces()
        rdir = self.path("report", "x").parent
        imports: dict = {}
        for tname in cfg["tariffs"]:
            for scen in cfg["scenarios"]:
                f = self._schedule_file(tname, scen)
                if f.exists():
                    cols = read_schedule_columns(f)
                    imports.setdefault(_tariff_key(tname), {})[scen] = {
                        c: v["grid_import_kw"] for c, v in cols.items()}
        outs = []
        if imports:
            # clipping is most visible with a battery
            best = "III" if "III" in cfg["scenarios"] else cfg["scenarios"][-1]
            clip = {t: v[best] for t, v in imports.items() if best in v}
            outs += peak_clipping(clip, rdir, first_day=first)
            outs += monthly_peak_table(imports, rdir, first)
        summ = self.out / "bills_summary.json"
        if summ.exists():
            outs += annual_cost_table(json.loads(summ.read_text()), rdir)
        results = {}
        for tname in cfg["study"]["tariffs"]:
            f = self.out / f"study_{_tariff_key(tname)}.csv"
            if f.exists():
                with f.open(newline="") as fh:
                    results[_tariff_key(tname)] = list(csv.DictReader(fh))
        if results:
            outs += study_distributions(results, rdir)
        if not outs:
            raise DataError("nothing to report; run earlier stages first")
        return outs

    # -- driver ------------------------------------------------------------

    def run(self, stages: list[str]) -> int:
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = {
            "dertariff_version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__,
            "seed": int(self.cfg["seed"]),
            "config": self.cfg,
            "stages": {},
            "complete": False,
        }
        code = EXIT_OK
        for name in STAGES:
            if name not in stages:
                continue
            inputs = {str(p.relative_to(self.out)): sha256(p)
                      for p in sorted(self.out.rglob("*.csv")) + sorted(self.out.rglob("*.json"))
                      if p.name != "manifest.json"}
            t0 = time.perf_counter()
            log.info("stage %s", name)
            try:
                outs = getattr(self, name)()
            except Exception as exc:  # noqa: BLE001
                code = _exit_code(exc)
                self.manifest["stages"][name] = {"status": "failed", "error": str(exc),
                                                 "inputs": inputs, "outputs": "incomplete"}
                log.error("stage %s failed: %s", name, exc)
                break
            self.manifest["stages"][name] = {
                "status": "complete",
                "seconds": round(time.perf_counter() - t0, 3),
                "inputs": inputs,
                "outputs": {str(p.relative_to(self.out)): sha256(p) for p in outs},
            }
        self.manifest["complete"] = code == EXIT_OK
        (self.out / "manifest.json").write_text(json.dumps(self.manifest, indent=1, default=str))
        return code


def save_network_path(net, path: Path) -> Path:
    save_network(net, path)
    return path


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, HemsError):
        return EXIT_SOLVER
    if isinstance(exc, StudyError):
        return EXIT_POWERFLOW
    if isinstance(exc, (DataError, ValueError, KeyError, OSError)):
        return EXIT_DATA
    return EXIT_SOLVER


def write_fixture(out: Path, customers: int = 10, days: int = 7) -> list[Path]:
    """Write a small ready-to-run config plus its feeder JSON."""
    out.mkdir(parents=True, exist_ok=True)
    net = make_feeder(customers)
    save_network(net, out / "network.json")
    cfg = {"seed": 7, "out": "run", "pool": {"customers": customers, "days": days,
                                             "first_day": 32},
           "history": {"customers": 20, "days": 365}, "network": "network.json",
           "study": {"tariffs": ["ToU", "ToUD"], "pv_levels": [0, 25, 50, 75],
                     "batt_levels": [0, 40, 80], "runs": 5}}
    (out / "config.json").write_text(json.dumps(cfg, indent=1))
    return [out / "network.json", out / "config.json"]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dertariff", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="pipeline config JSON")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, help="worker threads inside a stage")

    for name in STAGES:
        common(sub.add_parser(name, help=f"run the {name} stage"))
    run = sub.add_parser("run", help="run several stages in order")
    common(run)
    run.add_argument("--stages", default=",".join(STAGES),
                     help="comma-separated subset of " + ",".join(STAGES))
    fx = sub.add_parser("fixture", help="write a small example config and feeder")
    fx.add_argument("--out", default="fixture")
    fx.add_argument("--customers", type=int, default=10)
    fx.add_argument("--days", type=int, default=7)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "fixture":
        for p in write_fixture(Path(args.out), args.customers, args.days):
            print(p)
        return EXIT_OK
    if args.command == "run":
        stages = [s.strip() for s in args.stages.split(",") if s.strip()]
    else:
        stages = [args.command]
    try:
        bad = [s for s in stages if s not in STAGES]
        if bad:
            raise ConfigError(f"unknown stages: {bad}")
        cfg = load_config(args.config, seed=args.seed, out=args.out, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    pipe = Pipeline(cfg)
    code = pipe.run(stages)
    for name, info in pipe.manifest["stages"].items():
        line = f"{name}: {info['status']}"
        if info["status"] == "failed":
            line += f" ({info['error']})"
        print(line, file=sys.stderr if info["status"] == "failed" else sys.stdout)
    return code


if __name__ == "__main__":
    sys.exit(main())
