"""Unbalanced three-phase backward/forward sweep for radial LV feeders.

Loads are single-phase, constant power and unity power factor. Snapshots
are solved in batches: every array carries a leading time axis, so a year
of half-hours is one vectorised sweep per iteration.
"""

from __future__ import annotations

import csv
import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import SLOTS_PER_DAY

PHASES = "abc"
_SHIFT = np.exp(-2j * np.pi / 3 * np.arange(3))


def kron_reduce(z: np.ndarray) -> np.ndarray:
    """Fold the neutral (last conductor) of a 4x4 primitive impedance matrix into 3x3."""
    z = np.asarray(z, dtype=complex)
    if z.shape == (3, 3):
        return z
    if z.shape != (4, 4):
        raise ValueError("impedance matrices must be 3x3 or 4x4")
    return z[:3, :3] - np.outer(z[:3, 3], z[3, :3]) / z[3, 3]


@dataclass
class Network:
    """Radial feeder rooted at the slack node 0.

    ``load_points`` lists ``(node, phase)`` for each customer connection in
    the order of ``customer_ids``. ``z`` holds the 3x3 phase impedance (ohm)
    of each edge.
    """

    n_nodes: int
    edges: list[tuple[int, int]]
    z: np.ndarray
    customer_ids: list[str]
    load_points: list[tuple[int, int]]
    head_rating_a: float
    nominal_voltage: float = 230.0
    v0_pu: float = 1.0
    base_kva: float | None = None
    name: str = ""

    parent: np.ndarray = field(init=False, repr=False)
    order: np.ndarray = field(init=False, repr=False)
    edge_of: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=complex)
        n = self.n_nodes
        if len(self.edges) != n - 1:
            raise ValueError(f"a radial network with {n} nodes needs {n - 1} edges, "
                             f"got {len(self.edges)}")
        if self.z.shape != (len(self.edges), 3, 3):
            raise ValueError("one 3x3 impedance matrix per edge is required")
        for zz in self.z:
            if not np.allclose(zz, zz.T):
                raise ValueError("phase impedance matrices must be symmetric")
            if np.linalg.eigvalsh(zz.real).min() <= 0:
                raise ValueError("phase resistance matrices must be positive definite")
        adj = [[] for _ in range(n)]
        for k, (i, j) in enumerate(self.edges):
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise ValueError(f"edge {(i, j)} references an unknown node")
            adj[i].append((j, k))
            adj[j].append((i, k))
        parent = np.full(n, -1)
        edge_of = np.full(n, -1)
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        order = [0]
        queue = deque([0])
        while queue:
            i = queue.popleft()
            for j, k in adj[i]:
                if not seen[j]:
                    seen[j] = True
                    parent[j] = i
                    edge_of[j] = k
                    order.append(j)
                    queue.append(j)
        if not seen.all():
            raise ValueError("network graph is not connected")
        self.parent = parent
        self.order = np.array(order)
        self.edge_of = edge_of
        if len(self.customer_ids) != len(self.load_points):
            raise ValueError("one load point per customer is required")
        if len(set(self.customer_ids)) != len(self.customer_ids):
            raise ValueError("customer ids must be unique")
        for node, ph in self.load_points:
            if not 1 <= node < n or ph not in (0, 1, 2):
                raise ValueError(f"invalid load point {(node, ph)}")
        if self.head_rating_a <= 0:
            raise ValueError("head rating must be positive")
        if self.base_kva is None:
            self.base_kva = 3 * self.nominal_voltage * self.head_rating_a / 1000.0
        head = [k for k, (i, j) in enumerate(self.edges) if 0 in (i, j)]
        self.head_edges = np.array(head)

    @property
    def n_customers(self) -> int:
        return len(self.customer_ids)

    @property
    def head_edge(self) -> int:
        """Index of the edge (0, 1)."""
        return int(self.edge_of[1])

    # serialisation -------------------------------------------------------

    def to_dict(self) -> dict:
        edges = []
        for (i, j), zz in zip(self.edges, self.z):
            edges.append({"from": int(i), "to": int(j), "r": zz.real.tolist(),
                          "x": zz.imag.tolist()})
        return {
            "name": self.name,
            "nodes": list(range(self.n_nodes)),
            "edges": edges,
            "customers": [{"id": c, "node": int(nd), "phase": PHASES[ph]}
                          for c, (nd, ph) in zip(self.customer_ids, self.load_points)],
            "head_rating_a": self.head_rating_a,
            "nominal_voltage": self.nominal_voltage,
            "v0_pu": self.v0_pu,
            "base_kva": self.base_kva,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Network":
        nodes = d["nodes"]
        n = nodes if isinstance(nodes, int) else len(nodes)
        edges, zs = [], []
        for e in d["edges"]:
            z = np.asarray(e["r"], float) + 1j * np.asarray(e["x"], float)
            if "length_km" in e:
                z = z * float(e["length_km"])
            edges.append((int(e["from"]), int(e["to"])))
            zs.append(kron_reduce(z))
        ids, pts = [], []
        for c in d["customers"]:
            ph = c["phase"]
            ph = PHASES.index(ph.lower()) if isinstance(ph, str) else int(ph)
            ids.append(str(c["id"]))
            pts.append((int(c["node"]), ph))
        return cls(n, edges, np.array(zs), ids, pts, float(d["head_rating_a"]),
                   float(d.get("nominal_voltage", 230.0)), float(d.get("v0_pu", 1.0)),
                   d.get("base_kva"), d.get("name", ""))


def load_network(path) -> Network:
    return Network.from_dict(json.loads(Path(path).read_text()))


def save_network(net: Network, path) -> None:
    Path(path).write_text(json.dumps(net.to_dict(), indent=1))


@dataclass
class SnapshotResult:
    voltages: np.ndarray  # (..., nodes, 3) complex V
    branch_currents: np.ndarray  # (..., edges, 3) complex A
    head_current: np.ndarray  # (..., 3) A magnitude
    converged: np.ndarray | bool
    iterations: int

    def voltage_pu(self, net: Network) -> np.ndarray:
        return np.abs(self.voltages) / net.nominal_voltage


def _sweep(net: Network, p_kw: np.ndarray, tol_pu: float, max_iter: int):
    """Batched sweep; ``p_kw`` is (T, customers), positive = consumption."""
    T = p_kw.shape[0]
    N, E = net.n_nodes, len(net.edges)
    vbase = net.nominal_voltage
    v0 = net.v0_pu * vbase * _SHIFT
    V = np.broadcast_to(v0, (T, N, 3)).astype(complex)
    nodes = np.array([nd for nd, _ in net.load_points], dtype=int)
    phases = np.array([ph for _, ph in net.load_points], dtype=int)
    S = p_kw * 1000.0
    order = net.order[1:]
    rev = order[::-1]
    parent, edge_of, Z = net.parent, net.edge_of, net.z
    converged = np.zeros(T, dtype=bool)
    J = np.zeros((T, N, 3), dtype=complex)
    it = 0
    for it in range(1, max_iter + 1):
        I_load = np.conj(S / V[:, nodes, phases])
        J[:] = 0.0
        np.add.at(J, (slice(None), nodes, phases), I_load)
        for j in rev:
            J[:, parent[j]] += J[:, j]
        V_new = np.empty_like(V)
        V_new[:, 0] = v0
        for j in order:
            V_new[:, j] = V_new[:, parent[j]] - J[:, j] @ Z[edge_of[j]].T
        dv = np.abs(V_new - V).max(axis=(1, 2)) / vbase
        V = V_new
        converged = dv <= tol_pu
        if converged.all() or not np.all(np.isfinite(dv)):
            break
    # branch currents consistent with the returned voltages
    I_load = np.conj(S / V[:, nodes, phases])
    J[:] = 0.0
    np.add.at(J, (slice(None), nodes, phases), I_load)
    for j in rev:
        J[:, parent[j]] += J[:, j]
    I_br = np.zeros((T, E, 3), dtype=complex)
    I_br[:, edge_of[order]] = J[:, order]
    converged &= np.all(np.isfinite(V), axis=(1, 2))
    return V, I_br, converged, it


def solve_snapshot(net: Network, injections, tol_pu: float = 1e-6,
                   max_iter: int = 100) -> SnapshotResult:
    """Solve one operating point.

    ``injections`` is kW per customer (in ``net.customer_ids`` order, or a
    mapping id -> kW); positive values are consumption, negative export.
    """
    if isinstance(injections, dict):
        p = np.array([float(injections.get(c, 0.0)) for c in net.customer_ids])
    else:
        p = np.asarray(injections, dtype=float).ravel()
    if p.size != net.n_customers:
        raise ValueError("one injection per customer is required")
    if not np.all(np.isfinite(p)):
        raise ValueError("injections must be finite")
    V, I, conv, it = _sweep(net, p[None, :], tol_pu, max_iter)
    head = np.abs(I[0, net.head_edge])
    return SnapshotResult(V[0], I[0], head, bool(conv[0]), it)


def power_balance_mismatch(net: Network, p_kw, V: np.ndarray, I_br: np.ndarray) -> np.ndarray:
    """|slack injection - loads - series losses| in per unit of ``net.base_kva``.

    Works on a single snapshot or a batch (leading time axis).
    """
    p_kw = np.atleast_2d(p_kw)
    V = V.reshape((-1,) + V.shape[-2:])
    I_br = I_br.reshape((-1,) + I_br.shape[-2:])
    slack = 0.0
    for k in net.head_edges:
        slack = slack + np.real(np.sum(V[:, 0] * np.conj(I_br[:, k]), axis=-1))
    losses = np.real(np.einsum("tei,eij,tej->t", np.conj(I_br), net.z, I_br))
    loads = p_kw.sum(axis=1) * 1000.0
    return np.abs(slack - loads - losses) / (net.base_kva * 1000.0)


@dataclass
class TimeseriesResult:
    """Compact result of a run: per-customer |V| (pu) and feeder-head current per slot."""

    v_pu: np.ndarray  # (slots, customers)
    head_current: np.ndarray  # (slots,) max over phases, A
    head_current_phase: np.ndarray  # (slots, 3)
    converged: np.ndarray  # (slots,)
    iterations: int
    first_day: int = 1

    @property
    def nonconverged(self) -> list[tuple[int, int]]:
        idx = np.flatnonzero(~self.converged)
        return [(self.first_day + int(i) // SLOTS_PER_DAY, int(i) % SLOTS_PER_DAY + 1)
                for i in idx]

    @property
    def n_days(self) -> int:
        return self.v_pu.shape[0] // SLOTS_PER_DAY

    def daily_voltages(self) -> np.ndarray:
        """(days, 48, customers) voltage magnitudes in pu."""
        return self.v_pu.reshape(self.n_days, SLOTS_PER_DAY, -1)

    def write_csv(self, path, customer_ids: list[str]) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["day", "slot", "head_current_a", "head_a_a", "head_b_a", "head_c_a",
                        "converged"] + [f"v_{c}" for c in customer_ids])
            for t in range(self.v_pu.shape[0]):
                w.writerow([self.first_day + t // SLOTS_PER_DAY, t % SLOTS_PER_DAY + 1,
                            f"{self.head_current[t]:.6f}",
                            *(f"{a:.6f}" for a in self.head_current_phase[t]),
                            int(self.converged[t]),
                            *(f"{v:.6f}" for v in self.v_pu[t])])
        return path


def run_timeseries(net: Network, injections: np.ndarray, tol_pu: float = 1e-6,
                   max_iter: int = 100, first_day: int = 1, chunk: int = 4096,
                   return_raw: bool = False):
    """Solve every slot of ``injections`` shaped (slots, customers) or (customers, days, 48).

    Non-converged slots are kept (last iterate) and flagged.
    """
    p = np.asarray(injections, dtype=float)
    if p.ndim == 3:
        p = p.reshape(p.shape[0], -1).T
    if p.ndim != 2 or p.shape[1] != net.n_customers:
        raise ValueError("injections must be (slots, customers)")
    if p.shape[0] % SLOTS_PER_DAY:
        raise ValueError("injections must cover whole days")
    nodes = np.array([nd for nd, _ in net.load_points], dtype=int)
    phases = np.array([ph for _, ph in net.load_points], dtype=int)
    vs, heads, convs, raws = [], [], [], []
    iters = 0
    for s in range(0, p.shape[0], chunk):
        V, I, conv, it = _sweep(net, p[s:s + chunk], tol_pu, max_iter)
        iters = max(iters, it)
        vs.append(np.abs(V[:, nodes, phases]) / net.nominal_voltage)
        heads.append(np.abs(I[:, net.head_edge]))
        convs.append(conv)
        if return_raw:
            raws.append((V, I))
    head_phase = np.concatenate(heads)
    res = TimeseriesResult(np.concatenate(vs), head_phase.max(axis=1), head_phase,
                           np.concatenate(convs), iters, first_day)
    if return_raw:
        V = np.concatenate([r[0] for r in raws])
        I = np.concatenate([r[1] for r in raws])
        return res, V, I
    return res


@dataclass
class VoltageReport:
    flagged: np.ndarray  # (customers,) bool
    violating_days: np.ndarray  # (customers,) int
    threshold_days: float


def detect_voltage_problems(voltages, lo: float = 0.95, hi: float = 1.05,
                            day_fraction: float = 0.05) -> VoltageReport:
    """Flag customers whose voltage leaves [lo, hi] on more than 5 % of days.

    ``voltages`` is (days, 48, customers) in pu, or (slots, customers).
    A day counts once no matter how many of its slots are outside the band.
    """
    v = np.asarray(voltages, dtype=float)
    if v.ndim == 2:
        v = v.reshape(-1, SLOTS_PER_DAY, v.shape[1])
    bad = ((v < lo) | (v > hi)).any(axis=1)
    days = bad.sum(axis=0)
    threshold = day_fraction * v.shape[0]
    return VoltageReport(days > threshold, days, threshold)


@dataclass
class ThermalReport:
    overloaded: bool
    worst: float
    slots_over: int


def detect_thermal_overload(head_currents, rating: float) -> ThermalReport:
    i = np.asarray(head_currents, dtype=float).ravel()
    if i.size == 0:
        raise ValueError("head current series is empty")
    if rating <= 0:
        raise ValueError("rating must be positive")
    over = int((i > rating).sum())
    return ThermalReport(over > 0, float(i.max()), over)
