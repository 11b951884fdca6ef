"""Problem and solution containers shared by the LP and MILP solvers."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

LE, EQ, GE = "<", "=", ">"


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    LIMIT_REACHED = "LimitReached"


@dataclass
class LpProblem:
    """Minimise ``c @ x + offset`` subject to ``A x (<,=,>) b`` and ``lo <= x <= hi``.

    ``senses`` holds one of ``"<"``, ``"="``, ``">"`` per row. Infinite bounds
    are allowed on either side. ``A`` is stored as CSR regardless of the input
    format.
    """

    c: np.ndarray
    A: sp.csr_matrix
    senses: np.ndarray
    b: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    offset: float = 0.0
    names: list[str] | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        A = self.A
        if not sp.issparse(A):
            A = np.atleast_2d(np.asarray(A, dtype=float))
            if A.size == 0:
                A = np.zeros((0, n))
        self.A = sp.csr_matrix(A, dtype=float)
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.senses = np.asarray(self.senses, dtype="<U1").ravel()
        self.lo = np.asarray(self.lo, dtype=float).ravel()
        self.hi = np.asarray(self.hi, dtype=float).ravel()
        m = self.b.size
        if self.A.shape != (m, n):
            raise ValueError(f"constraint matrix has shape {self.A.shape}, expected {(m, n)}")
        if self.senses.size != m:
            raise ValueError("one sense per constraint row is required")
        if self.lo.size != n or self.hi.size != n:
            raise ValueError("bounds must have one entry per variable")
        if not set(self.senses.tolist()) <= {LE, EQ, GE}:
            raise ValueError(f"unknown constraint sense in {sorted(set(self.senses.tolist()))}")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.A.data))
                and np.all(np.isfinite(self.b))):
            raise ValueError("objective, matrix and right-hand side must be finite")
        if np.any(np.isnan(self.lo)) or np.any(np.isnan(self.hi)):
            raise ValueError("bounds must not be NaN")
        if self.names is not None and len(self.names) != n:
            raise ValueError("names must match the number of variables")

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.b.size

    def objective_value(self, x) -> float:
        return float(self.c @ np.asarray(x, dtype=float) + self.offset)

    def max_violation(self, x, scaled: bool = True) -> float:
        """Largest constraint or bound violation of ``x``.

        With ``scaled`` every row is divided by its largest absolute
        coefficient first, which is how feasibility tolerances are applied.
        """
        x = np.asarray(x, dtype=float)
        act = self.A @ x
        b = self.b
        if scaled and self.n_rows:
            s = abs(self.A).max(axis=1).toarray().ravel()
            s[s == 0] = 1.0
            act, b = act / s, b / s
        viol = np.zeros_like(b)
        le, ge, eq = self.senses == LE, self.senses == GE, self.senses == EQ
        viol[le] = np.maximum(act[le] - b[le], 0.0)
        viol[ge] = np.maximum(b[ge] - act[ge], 0.0)
        viol[eq] = np.abs(act[eq] - b[eq])
        bnd = np.maximum(np.maximum(self.lo - x, x - self.hi), 0.0)
        worst = 0.0
        if viol.size:
            worst = float(viol.max())
        if bnd.size:
            worst = max(worst, float(bnd.max()))
        return worst


@dataclass
class LpSolution:
    status: Status
    x: np.ndarray | None
    objective: float
    iterations: int = 0


@dataclass
class MilpProblem:
    """An :class:`LpProblem` with a subset of variables restricted to {0, 1}."""

    lp: LpProblem
    binaries: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __post_init__(self):
        self.binaries = np.unique(np.asarray(self.binaries, dtype=int).ravel())
        if self.binaries.size:
            if self.binaries.min() < 0 or self.binaries.max() >= self.lp.n_vars:
                raise ValueError("binary index outside the variable range")
            if np.any(self.lp.lo[self.binaries] < 0) or np.any(self.lp.hi[self.binaries] > 1):
                raise ValueError("binary variables must have bounds within [0, 1]")


@dataclass
class MilpLimits:
    node_cap: int = 10_000
    time_cap: float | None = None
    rel_gap: float = 1e-6


@dataclass
class MilpSolution:
    status: Status
    values: np.ndarray | None
    objective: float
    gap: float
    nodes_explored: int
    bound: float = -np.inf
    lp_iterations: int = 0
