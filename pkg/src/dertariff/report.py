"""Plot-ready tables and matplotlib figures for pipeline outputs."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .billing import monthly_peaks  # noqa: E402
from .domain import PeakVariant  # noqa: E402

MONTH_NAMES = ["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov",
               "Dec"]


def _write(path: Path, header: list[str], rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.6f}" if isinstance(v, float) else v for v in r])
    return path


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    # fixed metadata keeps the files byte-stable across runs
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)
    return path


def peak_clipping(imports: dict[str, dict[str, np.ndarray]], out_dir: Path,
                  pairs=(("Flat", "FlatD"), ("ToU", "ToUD")), first_day: int = 1) -> list[Path]:
    """Daily maximum import per customer for energy vs demand tariff pairs.

    ``imports`` maps tariff -> customer -> (days, 48) grid import.
    """
    rows, paths = [], []
    pairs = [(a, b) for a, b in pairs if a in imports and b in imports]
    if not pairs:
        return paths
    fig, axes = plt.subplots(1, len(pairs), figsize=(5 * len(pairs), 3.6), squeeze=False)
    for ax, (energy, demand) in zip(axes[0], pairs):
        for cid in sorted(imports[energy]):
            de = imports[energy][cid].max(axis=1)
            dd = imports[demand][cid].max(axis=1)
            for k, (x, y) in enumerate(zip(de, dd)):
                rows.append([cid, first_day + k, energy, float(x), demand, float(y)])
        de = np.mean([imports[energy][c].max(axis=1) for c in sorted(imports[energy])], axis=0)
        dd = np.mean([imports[demand][c].max(axis=1) for c in sorted(imports[demand])], axis=0)
        days = np.arange(first_day, first_day + de.size)
        ax.plot(days, de, label=energy, marker="o", ms=3)
        ax.plot(days, dd, label=demand, marker="s", ms=3)
        ax.set_xlabel("day of year")
        ax.set_ylabel("mean daily max import (kW)")
        ax.legend()
    paths.append(_write(out_dir / "peak_clipping.csv",
                        ["customer_id", "day", "energy_tariff", "energy_daily_max_kw",
                         "demand_tariff", "demand_daily_max_kw"], rows))
    paths.append(_save(fig, out_dir / "peak_clipping.png"))
    return paths


def monthly_peak_table(imports: dict[str, dict[str, dict[str, np.ndarray]]], out_dir: Path,
                       first_day: int = 1) -> list[Path]:
    """Median over customers of the monthly max import, per tariff and scenario.

    ``imports`` maps tariff -> scenario -> customer -> (days, 48).
    """
    rows = []
    for tariff in sorted(imports):
        for scen in sorted(imports[tariff]):
            per = [monthly_peaks(a, PeakVariant.MONTHLY_MAX, first_day)
                   for _, a in sorted(imports[tariff][scen].items())]
            for m in sorted(per[0]):
                vals = np.array([p[m] for p in per])
                rows.append([tariff, scen, m, float(np.median(vals)), float(vals.min()),
                             float(vals.max())])
    paths = [_write(out_dir / "monthly_peaks.csv",
                    ["tariff", "scenario", "month", "median_kw", "min_kw", "max_kw"], rows)]
    tariffs = sorted(imports)
    fig, axes = plt.subplots(1, len(tariffs), figsize=(3.6 * len(tariffs), 3.4), squeeze=False,
                             sharey=True)
    for ax, tariff in zip(axes[0], tariffs):
        scen = sorted(imports[tariff])
        sel = [r for r in rows if r[0] == tariff]
        months = sorted({r[2] for r in sel})
        width = 0.8 / max(len(scen), 1)
        for k, s in enumerate(scen):
            vals = [next(r[3] for r in sel if r[1] == s and r[2] == m) for m in months]
            ax.bar(np.arange(len(months)) + k * width, vals, width, label=f"Sc.{s}")
        ax.set_xticks(np.arange(len(months)) + 0.4 - width / 2)
        ax.set_xticklabels([MONTH_NAMES[m - 1] for m in months])
        ax.set_title(tariff)
        ax.set_ylabel("median monthly peak (kW)")
    axes[0][0].legend()
    paths.append(_save(fig, out_dir / "monthly_peaks.png"))
    return paths


def annual_cost_table(costs: dict[str, dict[str, dict[str, float]]], out_dir: Path) -> list[Path]:
    """``costs`` maps tariff -> scenario -> customer -> bill total ($)."""
    rows = []
    for tariff in sorted(costs):
        for scen in sorted(costs[tariff]):
            for cid, v in sorted(costs[tariff][scen].items()):
                rows.append([tariff, scen, cid, float(v)])
    paths = [_write(out_dir / "annual_costs.csv",
                    ["tariff", "scenario", "customer_id", "total"], rows)]
    tariffs = sorted(costs)
    scens = sorted({s for t in costs.values() for s in t})
    fig, ax = plt.subplots(figsize=(1.8 * len(tariffs) * len(scens) ** 0.5 + 2, 3.6))
    pos, data, labels = [], [], []
    for i, tariff in enumerate(tariffs):
        for k, s in enumerate(scens):
            if s in costs[tariff]:
                pos.append(i * (len(scens) + 1) + k)
                data.append(list(costs[tariff][s].values()))
                labels.append(f"{tariff}\n{s}")
    ax.boxplot(data, positions=pos)
    ax.set_xticks(pos)
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylabel("bill over horizon ($)")
    paths.append(_save(fig, out_dir / "annual_costs.png"))
    return paths


def study_distributions(results: dict[str, list[dict]], out_dir: Path) -> list[Path]:
    """Loading and voltage-problem distributions per (p, b), one series per tariff.

    ``results`` maps tariff -> rows with the raw study columns.
    """
    rows = []
    for tariff in sorted(results):
        for r in results[tariff]:
            rows.append([tariff, int(r["p"]), int(r["b"]), int(r["run"]),
                         float(r["max_head_loading_pct"]),
                         float(r["customers_with_voltage_problems_pct"])])
    paths = [_write(out_dir / "study_distribution.csv",
                    ["tariff", "p", "b", "run", "max_head_loading_pct",
                     "customers_with_voltage_problems_pct"], rows)]
    fig, axes = plt.subplots(2, 1, figsize=(9, 6.5), sharex=True)
    tariffs = sorted(results)
    combos = sorted({(r[1], r[2]) for r in rows})
    width = 0.8 / max(len(tariffs), 1)
    for metric, ax, label in ((4, axes[0], "max head loading (%)"),
                              (5, axes[1], "customers with voltage problems (%)")):
        for k, tariff in enumerate(tariffs):
            data = [[r[metric] for r in rows if r[0] == tariff and (r[1], r[2]) == c]
                    for c in combos]
            pos = np.arange(len(combos)) + k * width
            bp = ax.boxplot(data, positions=pos, widths=width * 0.9, patch_artist=True)
            for box in bp["boxes"]:
                box.set_facecolor(f"C{k}")
            ax.plot([], [], color=f"C{k}", label=tariff, lw=6)
        ax.set_ylabel(label)
        ax.legend(fontsize=7)
    axes[1].set_xticks(np.arange(len(combos)) + 0.4 - width / 2)
    axes[1].set_xticklabels([f"p{p}\nb{b}" for p, b in combos], fontsize=7)
    paths.append(_save(fig, out_dir / "study_distribution.png"))
    return paths
