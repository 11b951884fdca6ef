"""Synthetic load, PV and hot-water traces.

Net-load (or demand, or PV) traces come from cluster-conditioned Markov
chains: daily profiles are hard-clustered with a DP-means style rule, each
cluster gets its own transition matrix over a shared grid of value bins, and
sampling draws one cluster per trace via Dirichlet/categorical weights.

Hot-water draws follow an interval model: Poisson draw counts per interval,
uniform slot placement, Weibull magnitudes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import SLOTS_PER_DAY, month_of_day

MODEL_VERSION = 1
ANCHORS = ("absolute", "additive", "relative")
MAX_ITER = 100

# 1-based slot ranges of the eight hot-water intervals; the first wraps midnight
HW_INTERVALS: list[tuple[int, ...]] = [
    (47, 48, 1, 2, 3, 4),
    *[tuple(range(s, s + 6)) for s in range(5, 47, 6)],
]

SEASONS = {"summer": (12, 1, 2), "autumn": (3, 4, 5), "winter": (6, 7, 8),
           "spring": (9, 10, 11)}


class FitError(RuntimeError):
    """Raised when a model cannot be estimated from the given data."""


def season_of_month(month: int) -> str:
    for name, months in SEASONS.items():
        if month in months:
            return name
    raise ValueError(f"invalid month {month}")


# --------------------------------------------------------------------------
# cluster-conditioned Markov model


@dataclass
class ClusterModel:
    centroids: np.ndarray  # (K, 48)
    counts: np.ndarray  # (K,)
    edges: np.ndarray  # (S + 1,)
    transition: np.ndarray  # (K, S, S)
    initial: np.ndarray  # (K, S)
    anchor: str = "absolute"
    season_tags: list[str | None] = field(default_factory=list)
    active: np.ndarray | None = None  # (K, 48) slots where the chain steps

    def __post_init__(self):
        self.centroids = np.atleast_2d(np.asarray(self.centroids, float))
        self.counts = np.asarray(self.counts, float)
        self.edges = np.asarray(self.edges, float)
        self.transition = np.asarray(self.transition, float)
        self.initial = np.asarray(self.initial, float)
        K, S = self.n_clusters, self.n_states
        if self.centroids.shape != (K, SLOTS_PER_DAY):
            raise ValueError("centroids must be (clusters, 48)")
        if self.transition.shape != (K, S, S) or self.initial.shape != (K, S):
            raise ValueError("transition/initial shapes do not match the state grid")
        if np.any(self.counts < 1):
            raise ValueError("cluster counts must be >= 1")
        if np.any(np.diff(self.edges) < 0) or (S > 1 and np.any(np.diff(self.edges) <= 0)):
            raise ValueError("bin edges must be strictly increasing")
        for rows in (self.transition.reshape(-1, S), self.initial):
            if np.any(rows < 0) or np.any(np.abs(rows.sum(axis=1) - 1) > 1e-9):
                raise ValueError("transition rows must be probability vectors")
        if self.anchor not in ANCHORS:
            raise ValueError(f"anchor must be one of {ANCHORS}")
        if not self.season_tags:
            self.season_tags = [None] * K
        if self.active is None:
            self.active = np.ones((K, SLOTS_PER_DAY), dtype=bool)
        self.active = np.asarray(self.active, dtype=bool)

    @property
    def n_clusters(self) -> int:
        return self.counts.size

    @property
    def n_states(self) -> int:
        return self.edges.size - 1

    def to_dict(self) -> dict:
        return {
            "kind": "cluster_markov",
            "version": MODEL_VERSION,
            "anchor": self.anchor,
            "state_grid": self.edges.tolist(),
            "clusters": [
                {"centroid": self.centroids[k].tolist(), "count": float(self.counts[k]),
                 "season_tag": self.season_tags[k], "transition": self.transition[k].tolist(),
                 "initial": self.initial[k].tolist(), "active": self.active[k].astype(int).tolist()}
                for k in range(self.n_clusters)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterModel":
        if d.get("kind") != "cluster_markov" or d.get("version") != MODEL_VERSION:
            raise ValueError("not a version-1 cluster model document")
        cl = d["clusters"]
        return cls(
            centroids=[c["centroid"] for c in cl],
            counts=[c["count"] for c in cl],
            edges=d["state_grid"],
            transition=[c["transition"] for c in cl],
            initial=[c["initial"] for c in cl],
            anchor=d["anchor"],
            season_tags=[c.get("season_tag") for c in cl],
            active=[c["active"] for c in cl],
        )


def dp_means(X: np.ndarray, penalty: float, max_iter: int = MAX_ITER):
    """Hard DP-means clustering of the rows of ``X``.

    A point opens a new cluster when its squared distance to every centroid
    exceeds ``penalty``. Returns (labels, centroids).
    """
    X = np.asarray(X, dtype=float)
    centroids = X.mean(axis=0, keepdims=True)
    labels = np.full(X.shape[0], -1)
    sq = (X ** 2).sum(axis=1)
    # rounding slack of the expanded distance formula
    slack = 1e-9 * (1.0 + sq.max())
    for _ in range(max_iter):
        old = labels.copy()
        d2 = sq[:, None] - 2 * X @ centroids.T + (centroids ** 2).sum(axis=1)[None, :]
        labels = np.argmin(d2, axis=1)
        best = d2[np.arange(X.shape[0]), labels]
        # points far from every centroid open clusters one at a time, in order
        new: list[np.ndarray] = []
        for i in np.flatnonzero(best > penalty + slack):
            if new:
                dn = ((np.asarray(new) - X[i]) ** 2).sum(axis=1)
                j = int(np.argmin(dn))
                if dn[j] <= penalty and dn[j] < best[i]:
                    labels[i] = centroids.shape[0] + j
                    continue
            new.append(X[i].copy())
            labels[i] = centroids.shape[0] + len(new) - 1
        used = np.unique(labels)
        remap = np.full(centroids.shape[0] + len(new), -1)
        remap[used] = np.arange(used.size)
        labels = remap[labels]
        centroids = np.array([X[labels == k].mean(axis=0) for k in range(used.size)])
        if np.array_equal(labels, old):
            return labels, centroids
    raise FitError(f"clustering did not settle within {max_iter} iterations")


def _as_histories(histories) -> list[np.ndarray]:
    if isinstance(histories, np.ndarray):
        histories = [histories] if histories.ndim == 2 else list(histories)
    out = []
    for h in histories:
        a = np.asarray(h, dtype=float)
        if a.ndim == 1:
            a = a.reshape(-1, SLOTS_PER_DAY)
        if a.ndim != 2 or a.shape[1] != SLOTS_PER_DAY:
            raise ValueError("each history must be (days, 48)")
        if a.shape[0]:
            out.append(a)
    if not out:
        raise ValueError("no daily profiles supplied")
    return out


def _transform(days: np.ndarray, centroid: np.ndarray, anchor: str, active: np.ndarray):
    if anchor == "absolute":
        return days
    if anchor == "additive":
        return days - centroid
    out = np.zeros_like(days)
    out[:, active] = days[:, active] / centroid[active]
    return out


def _active_slots(centroid: np.ndarray, anchor: str) -> np.ndarray:
    if anchor != "relative":
        return np.ones(SLOTS_PER_DAY, dtype=bool)
    top = centroid.max()
    return centroid > max(1e-3 * top, 1e-9) if top > 0 else np.zeros(SLOTS_PER_DAY, bool)


def fit_cluster_model(histories, concentration: float = 1.0, n_states: int = 20,
                      anchor: str = "absolute", penalty: float | None = None,
                      season_tag: str | None = None, max_iter: int = MAX_ITER) -> ClusterModel:
    """Cluster daily profiles and estimate one Markov chain per cluster.

    ``histories`` is one (days, 48) array per customer, with consecutive
    days, so chains also learn the midnight transition. ``penalty`` overrides
    the new-cluster threshold derived from ``concentration``.
    ``anchor`` selects what the chain tracks: raw values, deviations from the
    cluster centroid, or ratios to it.
    """
    hist = _as_histories(histories)
    if concentration <= 0:
        raise ValueError("concentration must be positive")
    if n_states < 2:
        raise ValueError("at least two states are required")
    if anchor not in ANCHORS:
        raise ValueError(f"anchor must be one of {ANCHORS}")
    X = np.concatenate(hist)
    if not np.all(np.isfinite(X)):
        raise ValueError("profiles must be finite")
    if penalty is None:
        spread = X.var(axis=0).sum()
        penalty = 2.0 * spread * math.log1p(1.0 / concentration)
    labels, centroids = dp_means(X, penalty, max_iter)
    K = centroids.shape[0]
    active = np.array([_active_slots(c, anchor) for c in centroids])

    # per-day transformed values, grouped back into histories
    Y = np.empty_like(X)
    for k in range(K):
        sel = labels == k
        Y[sel] = _transform(X[sel], centroids[k], anchor, active[k])
    lo = Y[active[labels]].min() if active.any() else 0.0
    hi = Y[active[labels]].max() if active.any() else 0.0
    if hi <= lo:
        hi = lo + 1e-6
    edges = np.linspace(lo, hi, n_states + 1)

    trans = np.ones((K, n_states, n_states))
    init = np.ones((K, n_states))
    start = 0
    for h in hist:
        n = h.shape[0]
        lab = labels[start:start + n]
        states = np.clip(np.searchsorted(edges, Y[start:start + n], side="right") - 1,
                         0, n_states - 1)
        for d in range(n):
            k = lab[d]
            act = np.flatnonzero(active[k])
            if act.size == 0:
                continue
            seq = states[d, act]
            init[k, seq[0]] += 1
            # follow into the next day's first active slot when it exists
            if d + 1 < n:
                nxt = np.flatnonzero(active[lab[d + 1]])
                if nxt.size:
                    seq = np.append(seq, states[d + 1, nxt[0]])
            np.add.at(trans[k], (seq[:-1], seq[1:]), 1.0)
        start += n
    trans /= trans.sum(axis=2, keepdims=True)
    init /= init.sum(axis=1, keepdims=True)
    counts = np.bincount(labels, minlength=K).astype(float)
    return ClusterModel(centroids, counts, edges, trans, init, anchor, [season_tag] * K, active)


def simulate_chain(transition: np.ndarray, initial: np.ndarray, steps: int,
                   rng: np.random.Generator) -> np.ndarray:
    """State indices of a ``steps``-long Markov path."""
    cum = np.cumsum(transition, axis=1)
    cum[:, -1] = 1.0
    u = rng.random(steps)
    out = np.empty(steps, dtype=np.int64)
    s = int(np.searchsorted(np.cumsum(initial), u[0], side="right"))
    s = min(s, initial.size - 1)
    out[0] = s
    for t in range(1, steps):
        s = int(np.searchsorted(cum[s], u[t], side="right"))
        out[t] = s
    return out


def sample_net_load_trace(model: ClusterModel, rng_seed, days: int,
                          clip_min: float | None = None) -> np.ndarray:
    """A (days, 48) trace from ``model``; the same seed gives the same trace."""
    if days <= 0:
        raise ValueError("days must be positive")
    rng = np.random.default_rng(rng_seed)
    gamma = rng.dirichlet(model.counts)
    k = int(rng.choice(model.n_clusters, p=gamma))
    act = model.active[k]
    n_act = int(act.sum())
    out = np.zeros((days, SLOTS_PER_DAY))
    if n_act:
        path = simulate_chain(model.transition[k], model.initial[k], n_act * days, rng)
        lo, hi = model.edges[path], model.edges[path + 1]
        vals = lo + (hi - lo) * rng.random(path.size)
        out[:, act] = vals.reshape(days, n_act)
    cent = model.centroids[k]
    if model.anchor == "additive":
        out = out + cent
    elif model.anchor == "relative":
        out = out * np.where(act, cent, 0.0)
    if clip_min is not None:
        out = np.maximum(out, clip_min)
    return out


def fit_seasonal_models(histories, first_day: int = 1, **kw) -> dict[str, ClusterModel]:
    """One cluster model per season, fitted on that season's days only."""
    hist = _as_histories(histories)
    months = month_of_day(np.arange(first_day, first_day + hist[0].shape[0]))
    models = {}
    for season, ms in SEASONS.items():
        sel = np.isin(months, ms)
        if not sel.any():
            continue
        # split each history at season boundaries so midnight links stay true
        runs = []
        for h in hist:
            idx = np.flatnonzero(sel[:h.shape[0]])
            for seg in np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1):
                if seg.size:
                    runs.append(h[seg])
        models[season] = fit_cluster_model(runs, season_tag=season, **kw)
    return models


def sample_seasonal_trace(models: dict[str, ClusterModel], rng_seed, days: int,
                          first_day: int = 1, clip_min: float | None = None) -> np.ndarray:
    """Concatenate per-season samples so each day follows its season's model."""
    if days <= 0:
        raise ValueError("days must be positive")
    months = month_of_day(np.arange(first_day, first_day + days))
    seasons = [season_of_month(int(m)) for m in months]
    ss = (rng_seed if isinstance(rng_seed, np.random.SeedSequence)
          else np.random.SeedSequence(rng_seed))
    children = dict(zip(SEASONS, ss.spawn(len(SEASONS))))
    out = np.zeros((days, SLOTS_PER_DAY))
    for season in SEASONS:
        idx = np.flatnonzero([s == season for s in seasons])
        if idx.size == 0:
            continue
        if season not in models:
            raise ValueError(f"no model for season {season}")
        out[idx] = sample_net_load_trace(models[season], children[season], idx.size, clip_min)
    return out


# --------------------------------------------------------------------------
# hot-water draws


@dataclass
class HwInterval:
    slots: tuple[int, ...]
    mu: float
    kappa: float | None
    sigma: float | None

    @property
    def start_slot(self) -> int:
        return self.slots[0]

    @property
    def end_slot(self) -> int:
        return self.slots[-1]


@dataclass
class HotWaterModel:
    intervals: list[HwInterval]

    def __post_init__(self):
        if [iv.slots for iv in self.intervals] != HW_INTERVALS:
            raise ValueError("hot-water intervals must match the eight standard intervals")
        for iv in self.intervals:
            if iv.mu < 0:
                raise ValueError("draw rates must be non-negative")
            if iv.mu > 0 and not (iv.kappa and iv.kappa > 0 and iv.sigma and iv.sigma > 0):
                raise ValueError("intervals with draws need positive Weibull parameters")

    def to_dict(self) -> dict:
        return {
            "kind": "hot_water",
            "version": MODEL_VERSION,
            "intervals": [{"start_slot": iv.start_slot, "end_slot": iv.end_slot, "mu": iv.mu,
                           "kappa": iv.kappa, "sigma": iv.sigma} for iv in self.intervals],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HotWaterModel":
        if d.get("kind") != "hot_water" or d.get("version") != MODEL_VERSION:
            raise ValueError("not a version-1 hot-water model document")
        ivs = []
        for slots, row in zip(HW_INTERVALS, d["intervals"]):
            if (row["start_slot"], row["end_slot"]) != (slots[0], slots[-1]):
                raise ValueError("interval boundaries do not match")
            ivs.append(HwInterval(slots, float(row["mu"]), row["kappa"], row["sigma"]))
        return cls(ivs)

    @classmethod
    def uniform(cls, mu: float, kappa: float, sigma: float) -> "HotWaterModel":
        return cls([HwInterval(s, mu, kappa, sigma) for s in HW_INTERVALS])


def fit_weibull(x, tol: float = 1e-8, max_iter: int = 200, sigma_cap: float = 1e3):
    """Maximum-likelihood Weibull (scale, shape) for positive samples.

    Solves the profile shape equation with Newton steps kept inside a
    bisection bracket. Data with no spread push the shape to ``sigma_cap``.
    """
    x = np.asarray(x, dtype=float)
    if x.size == 0 or np.any(x <= 0):
        raise ValueError("Weibull fitting needs positive samples")
    y = np.log(x)
    ybar = y.mean()

    def g(s):
        z = s * y
        w = np.exp(z - z.max())
        w /= w.sum()
        m1 = w @ y
        m2 = w @ (y * y)
        return m1 - 1.0 / s - ybar, (m2 - m1 * m1) + 1.0 / s ** 2

    lo, hi = 1e-6, sigma_cap
    if g(hi)[0] < 0:
        s = sigma_cap
    else:
        s = 1.0
        for _ in range(max_iter):
            val, der = g(s)
            if val > 0:
                hi = s
            else:
                lo = s
            step = s - val / der
            s_new = step if lo < step < hi else 0.5 * (lo + hi)
            if abs(s_new - s) <= tol * max(1.0, s):
                s = s_new
                break
            s = s_new
    z = s * y
    zmax = z.max()
    kappa = math.exp((zmax + math.log(np.mean(np.exp(z - zmax)))) / s)
    return kappa, s


def fit_hotwater_model(draw_histories, min_days: int = 30) -> HotWaterModel:
    """Per-interval draw rate and Weibull magnitude fit from (days, 48) litre data."""
    hist = _as_histories(draw_histories)
    D = np.concatenate(hist)
    if D.shape[0] < min_days:
        raise ValueError(f"at least {min_days} days of draw data are needed")
    if np.any(D < 0):
        raise ValueError("draw volumes must be non-negative")
    ivs = []
    for slots in HW_INTERVALS:
        block = D[:, np.array(slots) - 1]
        nz = block[block > 0]
        mu = float((block > 0).sum(axis=1).mean())
        if nz.size == 0:
            ivs.append(HwInterval(slots, 0.0, None, None))
            continue
        kappa, sigma = fit_weibull(nz)
        ivs.append(HwInterval(slots, mu, kappa, sigma))
    return HotWaterModel(ivs)


def sample_hotwater_events(model: HotWaterModel, rng_seed):
    """One day of draw events as (interval index, 0-based slot, litres) arrays."""
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    which, slots, sizes = [], [], []
    for j, iv in enumerate(model.intervals):
        k = int(rng.poisson(iv.mu)) if iv.mu > 0 else 0
        if k == 0:
            continue
        which.append(np.full(k, j))
        slots.append(np.array(iv.slots)[rng.integers(0, len(iv.slots), size=k)] - 1)
        sizes.append(iv.kappa * rng.weibull(iv.sigma, size=k))
    if not which:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
    return np.concatenate(which), np.concatenate(slots), np.concatenate(sizes)


def sample_hotwater_day(model: HotWaterModel, rng_seed) -> np.ndarray:
    """Litres drawn in each of the 48 slots of one day."""
    _, slots, sizes = sample_hotwater_events(model, rng_seed)
    day = np.zeros(SLOTS_PER_DAY)
    np.add.at(day, slots, sizes)
    return day


def sample_hotwater_days(model: HotWaterModel, rng_seed, days: int) -> np.ndarray:
    if days <= 0:
        raise ValueError("days must be positive")
    rng = np.random.default_rng(rng_seed)
    return np.stack([sample_hotwater_day(model, rng) for _ in range(days)])


def save_model(model, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(model.to_dict(), indent=1))
    return path


def load_model(path):
    d = json.loads(Path(path).read_text())
    kind = d.get("kind")
    if kind == "cluster_markov":
        return ClusterModel.from_dict(d)
    if kind == "hot_water":
        return HotWaterModel.from_dict(d)
    if kind == "seasonal":
        return {k: ClusterModel.from_dict(v) for k, v in d["models"].items()}
    raise ValueError(f"unknown model kind {kind!r}")


def seasonal_to_dict(models: dict[str, ClusterModel]) -> dict:
    return {"kind": "seasonal", "version": MODEL_VERSION,
            "models": {k: m.to_dict() for k, m in models.items()}}
