"""Write problems in CPLEX LP text format for cross-checking with other solvers."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .problem import EQ, GE, LE, LpProblem, MilpProblem

_OPS = {LE: "<=", GE: ">=", EQ: "="}


def _names(lp: LpProblem) -> list[str]:
    if lp.names is not None:
        return [n.replace(" ", "_").replace("[", "(").replace("]", ")") for n in lp.names]
    return [f"x{j}" for j in range(lp.n_vars)]


def _terms(coefs, cols, names) -> str:
    parts = []
    for a, j in zip(coefs, cols):
        if a == 0:
            continue
        sign = "-" if a < 0 else "+"
        parts.append(f"{sign} {abs(a):.17g} {names[j]}")
    if not parts:
        return "0 " + names[0] if names else "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def to_lp_string(problem: LpProblem | MilpProblem) -> str:
    if isinstance(problem, MilpProblem):
        lp, binaries = problem.lp, problem.binaries
    else:
        lp, binaries = problem, np.zeros(0, dtype=int)
    names = _names(lp)
    lines = ["\\ written by dertariff", "Minimize"]
    nz = np.flatnonzero(lp.c)
    obj = _terms(lp.c[nz], nz, names)
    if lp.offset:
        obj += f" + {lp.offset:.17g} __const"
    lines.append(f" obj: {obj}")
    lines.append("Subject To")
    A = lp.A.tocsr()
    for i in range(lp.n_rows):
        s, e = A.indptr[i], A.indptr[i + 1]
        lhs = _terms(A.data[s:e], A.indices[s:e], names)
        lines.append(f" r{i}: {lhs} {_OPS[lp.senses[i]]} {lp.b[i]:.17g}")
    if lp.offset:
        lines.append(" fix_const: __const = 1")
    lines.append("Bounds")
    for j in range(lp.n_vars):
        lo, hi = lp.lo[j], lp.hi[j]
        if np.isneginf(lo) and np.isposinf(hi):
            lines.append(f" {names[j]} free")
            continue
        lo_s = "-inf" if np.isneginf(lo) else f"{lo:.17g}"
        hi_s = "+inf" if np.isposinf(hi) else f"{hi:.17g}"
        lines.append(f" {lo_s} <= {names[j]} <= {hi_s}")
    if binaries.size:
        lines.append("Binaries")
        lines.extend(f" {names[j]}" for j in binaries)
    lines.append("End")
    return "\n".join(lines) + "\n"


def write_lp(problem: LpProblem | MilpProblem, path) -> Path:
    path = Path(path)
    path.write_text(to_lp_string(problem))
    return path
