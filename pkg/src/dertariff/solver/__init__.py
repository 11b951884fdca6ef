"""Embedded LP / 0-1 MILP solver used by the household scheduler."""

from .lp import solve_lp
from .lpformat import to_lp_string, write_lp
from .milp import solve_milp
from .problem import (EQ, GE, LE, LpProblem, LpSolution, MilpLimits, MilpProblem,
                      MilpSolution, Status)

__all__ = [
    "EQ", "GE", "LE", "LpProblem", "LpSolution", "MilpLimits", "MilpProblem",
    "MilpSolution", "Status", "solve_lp", "solve_milp", "to_lp_string", "write_lp",
]
