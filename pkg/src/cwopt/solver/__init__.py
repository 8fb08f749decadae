"""Exact MILP solving: LP relaxation engines and branch-and-bound."""

from .bnb import SolveConfig, SolveStats, UnboundedError, solve, tie_break
from .lp import InfeasibleError, LpProblem, lp_relax

__all__ = [
    "SolveConfig",
    "SolveStats",
    "UnboundedError",
    "InfeasibleError",
    "LpProblem",
    "solve",
    "tie_break",
    "lp_relax",
]
